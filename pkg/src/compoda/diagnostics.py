"""Virtual iterates, communication accounting and runtime checks of the
deterministic inequalities that hold along every trajectory.

Checks read completed traces (run with ``debug=True`` where they need
ground-truth gradients) and return a :class:`CheckReport`. An inequality
``lhs <= rhs`` passes when ``lhs <= rhs * (1 + 1e-9) + 1e-12``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .algorithms import RoundRecord, RunTrace
from .composite import CompositePart, composite_prox
from .feedback import econtrol_factors

__all__ = ["CheckReport", "golden_section", "brute_force_prox", "within", "virtual_iterate", "check_virtual_real",
           "check_econtrol_sums", "check_consecutive_distance", "comm_ledger",
           "sampling_distribution_test", "sampling_probabilities",
           "TRACE_COLUMNS", "write_trace_csv", "read_trace_csv"]

REL_TOL = 1e-9
ABS_TOL = 1e-12


def within(lhs: float, rhs: float) -> bool:
    return lhs <= rhs * (1.0 + REL_TOL) + ABS_TOL


@dataclass
class CheckReport:
    name: str
    passed: bool
    lhs: float
    rhs: float
    slack: float
    worst_round: int | None = None
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        where = "" if self.worst_round is None else f" worst_round={self.worst_round}"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: lhs={self.lhs:.9g} rhs={self.rhs:.9g} slack={self.slack:.3g}{where}{extra}"


def virtual_iterate(psi: CompositePart, g_bar_t, A: float, gamma_t: float, x0) -> np.ndarray:
    """Dual-averaging point built from the true cumulative gradient."""
    return composite_prox(psi, g_bar_t, A, gamma_t, x0)


def _require_debug(trace: RunTrace):
    if trace.debug is None:
        raise ValueError("this check needs a trace recorded with debug=True")
    return trace.debug


def check_virtual_real(trace: RunTrace) -> CheckReport:
    """Per round ``||x_virtual_t - x_t|| <= ||e_t|| / gamma_{t-1}`` (gamma_{-1} = gamma_0).

    With a debug trace the final point ``t = T`` is included as well.
    """
    if trace.debug is not None:
        dbg = trace.debug
        dist = np.linalg.norm(dbg["x_virtual"] - dbg["x"], axis=1)
        e = np.vstack([dbg["e"].reshape(-1, dbg["x0"].size), dbg["e_T"][None, :]])
        gprev = np.append(dbg["gamma_prev"], dbg["gamma"][-1:] if len(dbg["gamma"]) else [1.0])
        err = np.linalg.norm(e, axis=1)
    else:
        dist = trace.column("dist_vr")
        err = trace.column("err_norm")
        gam = trace.column("gamma_t")
        gprev = np.concatenate([gam[:1], gam[:-1]])
    return _pointwise("virtual_real", dist, err / gprev)


def _pointwise(name, lhs, rhs) -> CheckReport:
    lhs = np.asarray(lhs, float)
    rhs = np.asarray(rhs, float)
    if lhs.size == 0:
        return CheckReport(name, True, 0.0, 0.0, 0.0)
    ok = lhs <= rhs * (1.0 + REL_TOL) + ABS_TOL
    slack = rhs - lhs
    worst = int(np.argmin(slack))
    return CheckReport(name, bool(ok.all()), float(lhs[worst]), float(rhs[worst]), float(slack[worst]), worst)


def check_econtrol_sums(client_logs, delta: float, weighted: bool = False, gammas=None) -> list[CheckReport]:
    """Both EControl error-sum bounds for every client.

    ``client_logs`` holds per-client arrays ``e`` (e_0..e_{T-1}), ``est_err``
    (g_hat_t - g_t for t < T) and ``g`` (g_0..g_{T-1}), plus ``e_final``
    (e_T). With ``weighted`` the gamma-weighted forms are checked, using
    ``gammas[t] = gamma_t``.
    """
    c_err, c_est = econtrol_factors(delta)
    reports = []
    for i, log in enumerate(client_logs):
        e = np.vstack([log["e"], log["e_final"][None, :]])  # e_0..e_T
        est = np.asarray(log["est_err"])
        g = np.asarray(log["g"])
        T = g.shape[0]
        diffs = np.sum(np.diff(g, axis=0) ** 2, axis=1)  # t = 0..T-2
        e_sq = np.sum(e[1:] ** 2, axis=1)  # t = 1..T
        est_sq = np.sum(est**2, axis=1)  # t = 0..T-1
        if weighted:
            gam = np.asarray(gammas, float)[:T]
            # e_t pairs with gamma_{t-1}; the difference g_{t+1} - g_t with gamma_t
            lhs1 = float(np.sum(e_sq / gam[:T] ** 2))
            rhs1 = c_err * float(np.sum(diffs / gam[: T - 1] ** 2))
            lhs2 = float(np.sum(est_sq / gam**4))
            rhs2 = c_est / gam[0] ** 2 * float(np.sum(diffs / gam[: T - 1] ** 2))
        else:
            lhs1, rhs1 = float(e_sq.sum()), c_err * float(diffs.sum())
            lhs2, rhs2 = float(est_sq.sum()), c_est * float(diffs.sum())
        tag = "weighted " if weighted else ""
        for name, lhs, rhs in ((f"{tag}error sum, client {i}", lhs1, rhs1),
                               (f"{tag}estimate gap sum, client {i}", lhs2, rhs2)):
            reports.append(CheckReport(name, within(lhs, rhs), lhs, rhs, rhs - lhs))
    return reports


def check_consecutive_distance(trace: RunTrace, L: float) -> CheckReport:
    """sum_t [(gamma_t + gamma_{t-1} - a_t L)/(2 a_t) r_t^2 + <g_hat_t - grad f(x_t), x_{t+1} - x_t>]
    <= F(x_0) - F(x_T) + (1/2) sum_t beta_t (rho_t^2 - rho_{t+1}^2).

    With constant gamma and a_t = 1 the beta terms vanish and the left
    coefficient is (2 gamma - L)/2.
    """
    dbg = _require_debug(trace)
    x = dbg["x"]
    T = x.shape[0] - 1
    if T == 0:
        return CheckReport("consecutive_distance", True, 0.0, 0.0, 0.0)
    steps = x[1:] - x[:-1]
    r2 = np.sum(steps**2, axis=1)
    gam, gprev, a = dbg["gamma"], dbg["gamma_prev"], dbg["a"]
    inner = np.sum((dbg["g_hat"] - dbg["grad"]) * steps, axis=1)
    lhs = float(np.sum((gam + gprev - a * L) / (2 * a) * r2 + inner))
    beta = (gam - gprev) / a
    rho2 = np.sum((x - dbg["x0"]) ** 2, axis=1)
    rhs = float(dbg["F"][0] - dbg["F"][-1] + 0.5 * np.sum(beta * (rho2[:-1] - rho2[1:])))
    return CheckReport("consecutive_distance", within(lhs, rhs), lhs, rhs, rhs - lhs)


def comm_ledger(T: int, m: float, uncompressed_rounds: int) -> float:
    """Per-client uplink cost: T compressed vectors plus ``m`` per uncompressed one."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return T * 1.0 + uncompressed_rounds * m


def sampling_probabilities(a_weights) -> np.ndarray:
    a = np.asarray(a_weights, float)
    return a / a.sum()


def sampling_distribution_test(a_weights, T: int, runs: int, rng) -> CheckReport:
    """Monte-Carlo check of the streaming weighted sampler.

    Simulates ``runs`` independent Bernoulli chains (keep index t with
    probability a_t / A_{t+1}) and compares index frequencies with a_t / A_T;
    each must lie within 4 binomial standard errors.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    a = np.broadcast_to(np.asarray(a_weights, float), (T,)) if np.ndim(a_weights) == 0 else np.asarray(a_weights, float)[:T]
    if a.size != T or np.any(a <= 0):
        raise ValueError("need T positive weights")
    kept = np.full(runs, -1)
    A = 0.0
    for t in range(T):
        A += a[t]
        hit = rng.random(runs) < a[t] / A
        kept[hit] = t
    freq = np.bincount(kept, minlength=T) / runs
    p = a / A
    tol = 4.0 * np.sqrt(p * (1 - p) / runs)
    dev = np.abs(freq - p)
    worst = int(np.argmax(dev - tol))
    passed = bool(np.all(dev <= tol))
    return CheckReport("sampling_distribution", passed, float(dev[worst]), float(tol[worst]),
                       float(tol[worst] - dev[worst]), worst,
                       detail="freq=" + ",".join(f"{v:.4f}" for v in freq[:12]))


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo: float, hi: float, iters: int = 200, diff=None) -> float:
    """Minimizer of a unimodal scalar function on ``[lo, hi]``.

    ``diff(c, d)``, when given, returns ``f(c) - f(d)`` evaluated without
    cancellation, which resolves the minimizer far below the square root of
    machine precision.
    """
    if diff is None:
        def diff(p, q):
            return f(p) - f(q)
    a, b = float(lo), float(hi)
    for _ in range(iters):
        if b - a <= 4e-16 * max(1.0, abs(a) + abs(b)):
            break
        c = b - _INV_PHI * (b - a)
        d = a + _INV_PHI * (b - a)
        if diff(c, d) <= 0.0:
            b = d
        else:
            a = c
    return 0.5 * (a + b)


def brute_force_prox(psi: CompositePart, S, A: float, gamma: float, x0) -> np.ndarray:
    """Independent reference for :func:`composite_prox` by scalar searches.

    Separable cases minimize each coordinate of
    ``S_j x + A psi_j(x) + gamma/2 (x - x0_j)^2`` by bounded golden-section
    search. The ball case maximizes the concave dual function of the
    constraint multiplier ``nu`` the same way and maps it back to a point.
    """
    S = np.asarray(S, float)
    x0 = np.asarray(x0, float)
    u = x0 - S / gamma
    if psi.kind in ("zero", "l1"):
        lam = psi.lam if psi.kind == "l1" else 0.0
        out = np.empty_like(u)
        for j in range(u.size):
            width = abs(u[j]) + 1.0
            s_j, c_j = S[j], x0[j]

            def diff(p, q, s_j=s_j, c_j=c_j):
                return (p - q) * (s_j + 0.5 * gamma * (p + q - 2.0 * c_j)) + A * lam * (abs(p) - abs(q))

            out[j] = golden_section(None, c_j - abs(s_j) / gamma - width, c_j + abs(s_j) / gamma + width, diff=diff)
        return out
    c = np.zeros_like(u) if psi.center is None else np.asarray(psi.center, float)
    r = psi.radius
    if np.linalg.norm(u - c) <= r:
        return u

    def point(nu):
        return (gamma * u + nu * c) / (gamma + nu)

    def neg_dual(nu):
        x = point(nu)
        return -(0.5 * gamma * np.sum((x - u) ** 2) + 0.5 * nu * (np.sum((x - c) ** 2) - r * r))

    # the optimal multiplier is gamma (||u - c|| / r - 1)
    hi = gamma * (np.linalg.norm(u - c) / r) * 2.0 + 1.0
    return point(golden_section(neg_dual, 0.0, hi))


# --------------------------------------------------------------------------
# trace CSV

TRACE_COLUMNS = ("t", "F_real", "F_virtual", "err_norm", "dist_vr", "gamma_t", "comm_cost_cum", "tau_bits_cum")


def write_trace_csv(trace_or_records, path) -> None:
    records = trace_or_records.records if isinstance(trace_or_records, RunTrace) else trace_or_records
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in records:
            w.writerow([r.t, repr(r.F_real), repr(r.F_virtual), repr(r.err_norm), repr(r.dist_vr),
                        repr(r.gamma_t), repr(r.comm_cost_cum), r.tau_bits_cum])


def read_trace_csv(path) -> list[RoundRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        return [RoundRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]),
                            float(row[5]), float(row[6]), int(row[7])) for row in reader]
