"""Server-side engines: inexact dual averaging, EControl with dual averaging,
stepsize presets, reservoir sampling of the output, and the proximal EF / EF21
baselines.

All runs are synchronous simulations. In each round every client draws a
stochastic gradient from its own random stream, runs its feedback mechanism
and sends one compressed vector; the server aggregates messages in client
index order. Communication is tallied per client: a compressed vector costs 1,
an uncompressed one costs ``m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .composite import CompositePart, composite_prox, prox_step, psi_value
from .compressors import Compressor
from .feedback import EControlClient, EF21Client, EFClient, eta_default
from .numkit import derive_stream, ordered_mean

__all__ = [
    "StepsizeParams", "gamma_fixed", "gamma_variable", "gamma_real",
    "StepsizeSchedule", "ServerState", "da_update", "server_reservoir_update",
    "final_output", "initial_gradient_step", "RoundRecord", "RunTrace",
    "run_econtrol_da", "run_prox_ef", "run_prox_ef21", "run_exact_da",
    "reference_solve", "TAU_STREAM", "COMPRESSOR_STREAM",
]

# stream ids: clients draw gradients from stream i, compressor randomness from
# COMPRESSOR_STREAM + i, the server's Bernoulli bits from TAU_STREAM
TAU_STREAM = 1 << 32
COMPRESSOR_STREAM = 1 << 33


# --------------------------------------------------------------------------
# stepsizes


@dataclass
class StepsizeParams:
    ell: float
    delta: float
    R0: float = 1.0
    sigma: float = 0.0
    n: int = 1
    L: float | None = None
    F0: float = 0.0

    def _require(self, T=None):
        if not (self.ell > 0 and self.delta > 0 and self.R0 > 0):
            raise ValueError("ell, delta and R0 must be positive")
        if self.sigma > 0 and self.n < 1:
            raise ValueError("n must be >= 1")
        if T is not None and self.sigma > 0 and T < 1:
            raise ValueError("T must be >= 1")


def gamma_fixed(p: StepsizeParams, T: int) -> float:
    """Constant gamma for a T-round run (virtual-iterate guarantee)."""
    p._require(T)
    return max(
        24.0 * math.sqrt(2.0) * p.ell / p.delta,
        math.sqrt(T * p.sigma**2 / (p.n * p.R0**2)),
        17.0 * T ** (1 / 3) * p.ell ** (1 / 3) * p.sigma ** (2 / 3) / (p.R0 ** (2 / 3) * p.delta ** (4 / 3)),
    )


def gamma_variable(t: int, p: StepsizeParams) -> float:
    """Anytime schedule, nondecreasing in t."""
    p._require()
    return (
        136.0 * p.ell / p.delta
        + math.sqrt(2.0 * t * p.sigma**2 / (p.n * p.R0**2))
        + 646.0 * p.ell ** (1 / 3) * p.sigma ** (2 / 3) * t ** (1 / 3) / (p.R0 ** (2 / 3) * p.delta ** (4 / 3))
    )


def gamma_real(p: StepsizeParams, T: int) -> float:
    """Constant gamma for the real-iterate guarantee; needs ``F0 >= 0``."""
    p._require(T)
    if p.F0 < 0:
        raise ValueError("F0 must be non-negative")
    return max(
        24.0 * math.sqrt(2.0) * p.ell / p.delta,
        32.0 * p.ell ** (2 / 3) * p.F0 ** (1 / 3) / (p.delta ** (4 / 3) * p.R0 ** (2 / 3)),
        135.0 * p.sigma * math.sqrt(T) / (p.delta**2 * p.R0),
    )


class StepsizeSchedule:
    """gamma_t as a function of the round index.

    ``preset`` is one of ``fixed_theorem``, ``variable_theorem``,
    ``real_iterates`` or ``constant``.
    """

    def __init__(self, preset: str, params: StepsizeParams | None = None, T: int | None = None,
                 gamma: float | None = None):
        self.preset = preset
        self.params = params
        self.T = T
        if preset == "constant":
            if gamma is None or not gamma > 0:
                raise ValueError("constant schedule needs gamma > 0")
            self._const = float(gamma)
        elif preset == "fixed_theorem":
            self._const = gamma_fixed(params, T)
        elif preset == "real_iterates":
            self._const = gamma_real(params, T)
        elif preset == "variable_theorem":
            params._require()
            self._const = None
        else:
            raise ValueError(f"unknown stepsize preset {preset!r}")

    @classmethod
    def constant(cls, gamma: float) -> "StepsizeSchedule":
        return cls("constant", gamma=gamma)

    @property
    def is_variable(self) -> bool:
        return self._const is None

    def __call__(self, t: int) -> float:
        if self._const is not None:
            return self._const
        return gamma_variable(t, self.params)

    def __repr__(self):
        if self.is_variable:
            return f"StepsizeSchedule(variable_theorem, gamma_0={self(0):.6g})"
        return f"StepsizeSchedule({self.preset}, gamma={self._const:.6g})"


def _as_schedule(gamma) -> StepsizeSchedule:
    if isinstance(gamma, StepsizeSchedule):
        return gamma
    return StepsizeSchedule.constant(float(gamma))


# --------------------------------------------------------------------------
# server state and dual averaging


@dataclass
class ServerState:
    """Dual-averaging state. The objective at round t is represented by the
    tuple (S, A, gamma_t, x0): the constants f(x_s) and <g_hat_s, -x_s> of the
    linear models do not move the minimizer and are dropped."""

    x0: np.ndarray
    x: np.ndarray
    S: np.ndarray
    A: float = 0.0
    g_hat: np.ndarray | None = None
    t: int = 0
    last_gamma: float | None = None
    enforce_monotone: bool = False
    # reservoir bookkeeping; the frozen cumulative gradient lives on clients
    A_frozen: float | None = None
    gamma_frozen: float | None = None
    tau_index: int | None = None
    tau_count: int = 0

    @classmethod
    def start(cls, x0, enforce_monotone=False):
        x0 = np.array(x0, dtype=np.float64, copy=True)
        return cls(x0=x0, x=x0.copy(), S=np.zeros_like(x0), enforce_monotone=enforce_monotone)


def da_update(server: ServerState, g_hat_t, a_t: float, gamma_t: float, psi: CompositePart) -> np.ndarray:
    """Fold ``a_t * g_hat_t`` into the dual sum and solve for x_{t+1}."""
    if not gamma_t > 0:
        raise ValueError("gamma_t must be positive")
    if not a_t > 0:
        raise ValueError("a_t must be positive")
    if server.enforce_monotone and server.last_gamma is not None and gamma_t < server.last_gamma:
        raise ValueError(f"gamma decreased at round {server.t}: {gamma_t} < {server.last_gamma}")
    server.S = server.S + a_t * np.asarray(g_hat_t, dtype=np.float64)
    server.A = server.A + a_t
    server.x = composite_prox(psi, server.S, server.A, gamma_t, server.x0)
    server.last_gamma = gamma_t
    server.t += 1
    return server.x


def server_reservoir_update(server: ServerState, a_t: float, gamma_t: float, rng) -> int:
    """Draw tau_t ~ Bernoulli(a_t / A_{t+1}); on success remember (A_{t+1}, gamma_t, t).

    Must be called before :func:`da_update` of the same round.
    """
    A_next = server.A + a_t
    tau = int(rng.random() < a_t / A_next)
    if tau:
        server.A_frozen = A_next
        server.gamma_frozen = gamma_t
        server.tau_index = server.t
        server.tau_count += 1
    return tau


def final_output(psi: CompositePart, g_bar, A_frozen, gamma_frozen, x0) -> np.ndarray:
    """Output point from the reservoir snapshot of the cumulative true gradient."""
    if A_frozen is None or gamma_frozen is None:
        raise ValueError("no reservoir sample was taken")
    return composite_prox(psi, g_bar, A_frozen, gamma_frozen, x0)


def _draw_all(oracle, x, sigma, rngs, batch_size):
    return [oracle.stochastic_client_gradient(i, x, sigma, rngs[i], batch_size) for i in range(oracle.n)]


def initial_gradient_step(psi, x0, oracle, L: float, sigma: float, R: float, rngs, batch_size=None):
    """One uncompressed stochastic proximal step from ``x0``.

    ``sigma`` is the per-client noise level; the averaged gradient has
    deviation ``sigma / sqrt(n)``, which enters gamma_0 = max(2L, sqrt(2) sigma_g / R).
    Returns ``(x0_new, gamma_0)``.
    """
    if not (L > 0 and R > 0):
        raise ValueError("L and R must be positive")
    if not isinstance(rngs, (list, tuple)):
        rngs = [rngs]
    sigma_g = sigma / math.sqrt(oracle.n)
    gamma0 = max(2.0 * L, math.sqrt(2.0) * sigma_g / R)
    g0 = ordered_mean(_draw_all(oracle, np.asarray(x0, float), sigma, rngs, batch_size))
    return composite_prox(psi, g0, 1.0, gamma0, x0), gamma0


# --------------------------------------------------------------------------
# traces


@dataclass
class RoundRecord:
    t: int
    F_real: float
    F_virtual: float
    err_norm: float
    dist_vr: float
    gamma_t: float
    comm_cost_cum: float
    tau_bits_cum: int


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    x_bar: np.ndarray | None = None
    F_bar: float = math.nan
    comm_cost: float = 0.0
    tau_bits: int = 0
    compressed_rounds: int = 0
    uncompressed_rounds: int = 0
    tau_index: int | None = None
    F_star: float = 0.0
    config: dict = field(default_factory=dict)
    debug: dict | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        return {
            "rounds": len(self.records),
            "F_real": last.F_real if last else math.nan,
            "F_virtual": last.F_virtual if last else math.nan,
            "F_bar": self.F_bar,
            "comm_cost": self.comm_cost,
            "tau_bits": self.tau_bits,
            "F_star": self.F_star,
        }


def _objective(oracle, psi):
    return lambda x: oracle.value(x) + psi_value(psi, x)


def _client_rngs(seed, n):
    return [derive_stream(seed, i) for i in range(n)], [derive_stream(seed, COMPRESSOR_STREAM + i) for i in range(n)]


# --------------------------------------------------------------------------
# EControl with dual averaging


def run_econtrol_da(oracle, psi: CompositePart, compressor: Compressor, x0, T: int, gamma, *,
                    sigma: float = 0.0, batch_size=None, seed: int = 0, a_t=1.0,
                    eta: float | None = None, initial_step: bool = False, L: float | None = None,
                    R0: float | None = None, m: float = 1.0, F_star: float = 0.0,
                    debug: bool = False) -> RunTrace:
    """Simulate EControl with dual averaging for ``T`` compressed rounds.

    ``gamma`` is a constant or a :class:`StepsizeSchedule`; ``a_t`` a constant
    or a callable of the round index. Per-client cost: T compressed rounds,
    one uncompressed round for the initial estimates g_hat_{-1}, one for the
    final snapshot collection, plus one more when the initial proximal step is
    taken (only for a nonzero psi).
    """
    schedule = _as_schedule(gamma)
    weight = a_t if callable(a_t) else (lambda t, _a=float(a_t): _a)
    n = oracle.n
    delta = compressor.delta
    eta = eta_default(delta) if eta is None else float(eta)
    F = _objective(oracle, psi)
    rngs, crngs = _client_rngs(seed, n)
    tau_rng = derive_stream(seed, TAU_STREAM)
    x0 = np.array(x0, dtype=np.float64, copy=True)

    uncompressed = 0
    if initial_step and not psi.is_zero:
        if L is None or R0 is None:
            raise ValueError("the initial step needs L and R0")
        x0, _ = initial_gradient_step(psi, x0, oracle, L, sigma, R0, rngs, batch_size)
        uncompressed += 1

    # g_hat_{-1}^i is the round-0 sample itself, sent uncompressed
    g_init = _draw_all(oracle, x0, sigma, rngs, batch_size)
    uncompressed += 1
    clients = [EControlClient(g, eta, debug=debug) for g in g_init]
    server = ServerState.start(x0, enforce_monotone=schedule.is_variable)
    server.g_hat = ordered_mean(g_init)

    trace = RunTrace(F_star=F_star)
    cost = uncompressed * m
    tau_bits = 0
    g_bar_true = np.zeros_like(x0)
    x_virtual = x0.copy()
    prev_gamma = schedule(0)
    dbg = _DebugLog(x0, F(x0)) if debug else None

    for t in range(T):
        gamma_t = schedule(t)
        w = weight(t)
        tau = server_reservoir_update(server, w, gamma_t, tau_rng)
        tau_bits += 1
        gs = g_init if t == 0 else _draw_all(oracle, server.x, sigma, rngs, batch_size)
        deltas = []
        for i, c in enumerate(clients):
            c.reservoir_update(gs[i], w, tau)
            deltas.append(c.step(gs[i], compressor, crngs[i]))
        cost += 1.0
        x_t = server.x
        err_t = server.S - g_bar_true  # e_t = sum_{k<t} a_k (g_hat_k - g_k)
        dist_t = float(np.linalg.norm(x_virtual - x_t))
        server.g_hat = server.g_hat + ordered_mean(deltas)
        x_next = da_update(server, server.g_hat, w, gamma_t, psi)
        g_bar_true = ordered_mean([c.g_bar_running for c in clients])
        x_virtual = composite_prox(psi, g_bar_true, server.A, gamma_t, server.x0)
        F_next = F(x_next)
        trace.records.append(RoundRecord(
            t, F_next - F_star, F(x_virtual) - F_star, float(np.linalg.norm(err_t)),
            dist_t, gamma_t, cost, tau_bits))
        if dbg is not None:
            dbg.add_round(x_t=x_t, x_next=x_next, x_virtual=x_virtual, g_hat=server.g_hat,
                          g=ordered_mean(gs), grad=oracle.gradient(x_t), e=err_t,
                          gamma=gamma_t, gamma_prev=prev_gamma, a=w, F_next=F_next)
        prev_gamma = gamma_t

    # one uncompressed collection of the frozen snapshots
    cost += m
    uncompressed += 1
    if T > 0:
        g_bar = ordered_mean([c.g_bar_frozen for c in clients])
        trace.x_bar = final_output(psi, g_bar, server.A_frozen, server.gamma_frozen, server.x0)
        trace.F_bar = F(trace.x_bar) - F_star
    trace.x_final = server.x
    trace.comm_cost = cost
    trace.tau_bits = tau_bits
    trace.compressed_rounds = T
    trace.uncompressed_rounds = uncompressed
    trace.tau_index = server.tau_index
    if dbg is not None:
        trace.debug = dbg.finish(server, clients, eta=eta, delta=delta, e_T=server.S - g_bar_true)
    return trace


class _DebugLog:
    """Ground-truth quantities the algorithm itself never stores."""

    def __init__(self, x0, F0):
        self.xs = [x0.copy()]
        self.xv = [x0.copy()]
        self.F = [F0]
        self.rows = {k: [] for k in ("g_hat", "g", "grad", "e", "gamma", "gamma_prev", "a")}

    def add_round(self, *, x_t, x_next, x_virtual, F_next, **kw):
        self.xs.append(np.array(x_next, copy=True))
        self.xv.append(np.array(x_virtual, copy=True))
        self.F.append(F_next)
        for k, v in kw.items():
            self.rows[k].append(np.array(v, copy=True) if isinstance(v, np.ndarray) else v)

    def finish(self, server, clients, **extra):
        out = {k: np.array(v) for k, v in self.rows.items()}
        out["x"] = np.array(self.xs)
        out["x_virtual"] = np.array(self.xv)
        out["F"] = np.array(self.F)
        out["x0"] = server.x0.copy()
        out["S"] = server.S.copy()
        out["clients"] = [
            {k: np.array(v) for k, v in c.log.items()} | {"e_final": c.e.copy(), "shadow_e": c.shadow_e.copy()}
            for c in clients if getattr(c, "log", None) is not None
        ]
        out.update(extra)
        return out


# --------------------------------------------------------------------------
# baselines


def run_prox_ef(oracle, psi, compressor, x0, T, h, *, sigma=0.0, batch_size=None, seed=0,
                m: float = 1.0, F_star: float = 0.0, debug: bool = False) -> RunTrace:
    """Classic EF per client; the server averages the g_hat_t^i and takes a
    proximal step of length ``h`` from the current iterate. No uncompressed
    rounds."""
    return _run_baseline("ef", oracle, psi, compressor, x0, T, h, sigma, batch_size, seed, m, F_star, debug)


def run_prox_ef21(oracle, psi, compressor, x0, T, h, *, sigma=0.0, batch_size=None, seed=0,
                  m: float = 1.0, F_star: float = 0.0, debug: bool = False) -> RunTrace:
    """EF21 per client (compressed gradient differences) with a proximal step
    of length ``h``. One uncompressed round initializes g_hat_{-1}."""
    return _run_baseline("ef21", oracle, psi, compressor, x0, T, h, sigma, batch_size, seed, m, F_star, debug)


def _run_baseline(kind, oracle, psi, compressor, x0, T, h, sigma, batch_size, seed, m, F_star, debug):
    if not h > 0:
        raise ValueError("stepsize h must be positive")
    F = _objective(oracle, psi)
    rngs, crngs = _client_rngs(seed, oracle.n)
    x = np.array(x0, dtype=np.float64, copy=True)
    g_init = _draw_all(oracle, x, sigma, rngs, batch_size)
    uncompressed = 0
    if kind == "ef21":
        clients = [EF21Client(g) for g in g_init]
        g_hat = ordered_mean(g_init)
        uncompressed = 1
    else:
        clients = [EFClient(x.size) for _ in g_init]
        g_hat = None
    cost = uncompressed * m
    trace = RunTrace(F_star=F_star)
    err = np.zeros_like(x)
    dbg = _DebugLog(x, F(x)) if debug else None
    for t in range(T):
        gs = g_init if t == 0 else _draw_all(oracle, x, sigma, rngs, batch_size)
        msgs = [c.step(gs[i], compressor, crngs[i]) for i, c in enumerate(clients)]
        g_mean = ordered_mean(gs)
        g_hat = ordered_mean(msgs) if kind == "ef" else g_hat + ordered_mean(msgs)
        cost += 1.0
        err_t = err
        x_next = prox_step(psi, g_hat, x, h)
        F_next = F(x_next)
        trace.records.append(RoundRecord(t, F_next - F_star, math.nan, float(np.linalg.norm(err_t)),
                                         math.nan, 1.0 / h, cost, 0))
        if dbg is not None:
            dbg.add_round(x_t=x, x_next=x_next, x_virtual=x_next, g_hat=g_hat, g=g_mean,
                          grad=oracle.gradient(x), e=err_t, gamma=1.0 / h, gamma_prev=1.0 / h,
                          a=1.0, F_next=F_next)
        err = err + (g_hat - g_mean)
        x = x_next
    trace.x_final = x
    trace.comm_cost = cost
    trace.compressed_rounds = T
    trace.uncompressed_rounds = uncompressed
    if dbg is not None:
        trace.debug = dbg.finish(ServerState.start(x0), clients, e_T=err)
    return trace


def run_exact_da(oracle, psi, x0, T, gamma, a_t: float = 1.0) -> np.ndarray:
    """Reference dual averaging on exact gradients; returns iterates x_0..x_T."""
    schedule = _as_schedule(gamma)
    server = ServerState.start(x0)
    xs = [server.x.copy()]
    for t in range(T):
        da_update(server, oracle.gradient(server.x), a_t, schedule(t), psi)
        xs.append(server.x.copy())
    return np.array(xs)


# --------------------------------------------------------------------------
# reference optimum


def reference_solve(oracle, psi, x0, max_iter: int = 20000, tol: float = 1e-10, L0: float = 1.0,
                    patience: int = 200):
    """Accelerated proximal gradient (backtracking, adaptive restart) on the
    exact objective. Stops when the gradient-mapping norm drops below ``tol``
    or the objective has not improved for ``patience`` iterations.
    Returns ``(x, F(x))``; used to estimate F*."""
    F = _objective(oracle, psi)
    f = oracle.value
    x = np.array(x0, dtype=np.float64, copy=True)
    y, theta, L = x.copy(), 1.0, float(L0)
    Fx = F(x)
    best, stale = Fx, 0
    for _ in range(max_iter):
        fy, gy = f(y), oracle.gradient(y)
        while True:
            z = prox_step(psi, gy, y, 1.0 / L)
            dz = z - y
            if f(z) <= fy + gy @ dz + 0.5 * L * (dz @ dz) + 1e-15 * abs(fy):
                break
            L *= 2.0
        Fz = F(z)
        if Fz > Fx and theta > 1.0:  # momentum overshot: restart from x
            y, theta = x.copy(), 1.0
            continue
        mapping = L * float(np.linalg.norm(dz))
        theta_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        y = z + ((theta - 1.0) / theta_next) * (z - x)
        if Fz <= Fx:
            x, Fx = z, Fz
        theta = theta_next
        L *= 0.9
        if mapping <= tol:
            break
        if Fx < best - 1e-15 * max(1.0, abs(best)):
            best, stale = Fx, 0
        else:
            stale += 1
            if stale >= patience:
                break
    return x, Fx
