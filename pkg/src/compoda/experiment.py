"""Turn a validated configuration into a problem instance and run it.

:func:`build` creates everything a run needs once (oracle, regularizer,
compressor, starting point, reference optimum and the constants the
stepsize presets consume); :func:`run_setup` and :func:`sweep` execute runs
on top of it. Nothing here touches the filesystem except dataset loading.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import composite, compressors
from .algorithms import (StepsizeParams, StepsizeSchedule, reference_solve, run_econtrol_da,
                         run_prox_ef, run_prox_ef21)
from .config import ConfigError
from .numkit import derive_stream
from .problems import (estimate_smoothness, gen_logistic_dataset, gen_softmax, load_csv_dataset,
                       logistic_oracle, partition_heterogeneous, split_softmax_to_clients)

__all__ = ["Setup", "build", "run_setup", "run_config", "sweep", "stepsize_for", "sweep_width"]

_PROBE_STREAM = (1 << 40) + 2
_SMOOTHNESS_MARGIN = 1.5


@dataclass
class Setup:
    cfg: dict
    oracle: object
    psi: composite.CompositePart
    compressor: compressors.Compressor
    x0: np.ndarray
    F_star: float
    L: float
    ell: float
    R0: float
    F0: float
    m: float
    sigma: float
    batch_size: int | None = None
    L_cert: float = math.inf
    x_ref: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.oracle.n

    @property
    def delta(self) -> float:
        return self.compressor.delta

    def objective(self, x) -> float:
        return self.oracle.value(x) + composite.psi_value(self.psi, x)

    def stepsize_params(self) -> StepsizeParams:
        return StepsizeParams(ell=self.ell, delta=self.delta, R0=self.R0, sigma=self.sigma,
                              n=self.n, L=self.L, F0=max(self.F0, 0.0))


def _logistic_data(prob, seed):
    if "csv_path" in prob:
        try:
            X, y = load_csv_dataset(prob["csv_path"], header=prob["header"], normalize=prob["normalize"])
        except OSError as exc:
            raise ConfigError(f"problem.csv_path: {exc.strerror}: {prob['csv_path']}") from None
    else:
        X, y = gen_logistic_dataset(prob["N"], prob["d"], seed, classes=prob["classes"])
        if prob["normalize"]:
            lo, hi = X.min(axis=0), X.max(axis=0)
            X = (X - lo) / np.where(hi > lo, hi - lo, 1.0)
    labels = np.asarray(y)
    classes = np.unique(labels)
    if set(classes.tolist()) <= {0, 1}:
        target = labels.astype(np.float64)
    else:
        # one-vs-rest: the positive class against everything else
        target = (labels == prob["positive_class"]).astype(np.float64)
    return X, labels, target


def _build_oracle(cfg):
    prob = cfg["problem"]
    n = cfg["clients"]["n"]
    seed = prob["seed"]
    if prob["type"] == "softmax":
        p = gen_softmax(prob["d"], prob["k"], prob["mu"], seed)
        mode = prob["split"]
        try:
            oracle = split_softmax_to_clients(p, n, seed=seed, mode=mode)
        except ValueError as exc:
            raise ConfigError(f"problem: {exc}") from None
        analytic = p.recentred and (n == 1 or mode == "replicate")
        return oracle, {"analytic_zero_stationary": analytic}
    X, labels, target = _logistic_data(prob, seed)
    try:
        part = partition_heterogeneous(X.shape[0], labels, n, cfg["clients"]["frac_random"], seed)
    except ValueError as exc:
        raise ConfigError(f"clients: {exc}") from None
    return logistic_oracle(X, target, part), {"analytic_zero_stationary": False, "sizes": part.sizes()}


def build(cfg: dict) -> Setup:
    """Instantiate the problem described by a validated config."""
    prob = cfg["problem"]
    oracle, info = _build_oracle(cfg)
    d = oracle.d
    psi = composite.from_config(cfg["composite"])
    if psi.center is not None and psi.center.size != d:
        raise ConfigError(f"composite.center: expected {d} entries, got {psi.center.size}")
    compressor = compressors.from_config(cfg["compressor"], d)
    fill = prob.get("x0", 0.1 if prob["type"] == "softmax" else 0.0)
    x0 = np.full(d, float(fill))
    if not math.isfinite(composite.psi_value(psi, x0)):
        raise ConfigError("problem.x0 lies outside the domain of the composite part")

    if "ell" in prob and "L" in prob:
        L, ell = prob["L"], prob["ell"]
    else:
        L_hat, ell_hat = estimate_smoothness(oracle, 8, derive_stream(prob["seed"], _PROBE_STREAM), center=x0)
        L = prob.get("L", _SMOOTHNESS_MARGIN * L_hat)
        ell = prob.get("ell", _SMOOTHNESS_MARGIN * max(ell_hat, L_hat))

    x_ref = None
    zero_ok = math.isfinite(composite.psi_value(psi, np.zeros(d)))
    if "F_star" in prob:
        F_star = prob["F_star"]
    elif info["analytic_zero_stationary"] and zero_ok and psi.kind != "ball":
        # 0 is stationary for f and minimizes an l1 term, so it is optimal
        x_ref = np.zeros(d)
        F_star = oracle.value(x_ref) + composite.psi_value(psi, x_ref)
    else:
        x_ref, F_star = reference_solve(oracle, psi, x0)
    if "R0" in cfg["algorithm"]:
        R0 = cfg["algorithm"]["R0"]
    elif x_ref is not None:
        R0 = float(np.linalg.norm(x0 - x_ref)) or 1.0
    else:
        R0 = 1.0
    F0 = oracle.value(x0) + composite.psi_value(psi, x0) - F_star
    m = cfg.get("m", 1.0 / compressor.delta)
    return Setup(cfg=cfg, oracle=oracle, psi=psi, compressor=compressor, x0=x0, F_star=float(F_star),
                 L=float(L), ell=float(ell), R0=float(R0), F0=float(F0), m=float(m),
                 sigma=float(cfg["noise"]["sigma"]), batch_size=cfg["noise"].get("batch_size"),
                 L_cert=oracle.smoothness_bound(), x_ref=x_ref, info=info)


def stepsize_for(setup: Setup, value: float | None = None, T: int | None = None):
    """Stepsize argument for the configured algorithm.

    DA methods get a :class:`StepsizeSchedule`; baselines get the step
    length ``h``. A grid value ``v`` means ``1/gamma = v`` for DA and
    ``h = v`` for the baselines.
    """
    alg = setup.cfg["algorithm"]
    step = alg["stepsize"]
    is_da = alg["kind"] == "econtrol_da"
    if value is not None:
        return StepsizeSchedule.constant(1.0 / value) if is_da else float(value)
    preset = step["preset"]
    if preset == "grid":
        raise ConfigError("algorithm.stepsize: a grid preset needs the sweep command")
    if preset == "constant":
        if "gamma" in step:
            gamma = step["gamma"]
        elif "inv_gamma" in step:
            gamma = 1.0 / step["inv_gamma"]
        else:
            gamma = 1.0 / step["h"]
        return StepsizeSchedule.constant(gamma) if is_da else 1.0 / gamma
    return StepsizeSchedule(preset, setup.stepsize_params(), T=alg["T"] if T is None else T)


def run_setup(setup: Setup, *, seed: int | None = None, debug: bool | None = None, value: float | None = None,
              T: int | None = None):
    """Run the configured algorithm once and return its trace."""
    cfg = setup.cfg
    alg = cfg["algorithm"]
    seed = cfg["seed"] if seed is None else seed
    debug = cfg["debug"] if debug is None else debug
    T = alg["T"] if T is None else T
    step = stepsize_for(setup, value, T)
    common = dict(sigma=setup.sigma, batch_size=setup.batch_size, seed=seed, m=setup.m,
                  F_star=setup.F_star, debug=debug)
    if alg["kind"] == "econtrol_da":
        eta = alg.get("eta", cfg["mechanism"].get("eta"))
        trace = run_econtrol_da(setup.oracle, setup.psi, setup.compressor, setup.x0, T, step,
                                a_t=alg["a_t"], eta=eta, initial_step=alg["initial_step"],
                                L=setup.L, R0=setup.R0, **common)
    elif alg["kind"] == "prox_ef":
        trace = run_prox_ef(setup.oracle, setup.psi, setup.compressor, setup.x0, T, step, **common)
    else:
        trace = run_prox_ef21(setup.oracle, setup.psi, setup.compressor, setup.x0, T, step, **common)
    trace.config = {"algorithm": alg["kind"], "seed": seed, "T": T, "stepsize": repr(step),
                    "delta": setup.delta, "n": setup.n, "m": setup.m, "L": setup.L, "ell": setup.ell,
                    "R0": setup.R0}
    return trace


def run_config(cfg: dict, **kw):
    setup = build(cfg)
    return setup, run_setup(setup, **kw)


def sweep_width(env=None) -> int:
    """Parallel sweep width from ``COMPODA_THREADS`` (default 1)."""
    raw = (os.environ if env is None else env).get("COMPODA_THREADS", "1")
    try:
        width = int(raw)
    except ValueError:
        raise ConfigError(f"COMPODA_THREADS must be a positive integer, got {raw!r}") from None
    if width < 1:
        raise ConfigError(f"COMPODA_THREADS must be a positive integer, got {raw!r}")
    return width


def final_loss(trace) -> float:
    return trace.records[-1].F_real if trace.records else math.inf


def sweep(setup: Setup, grid, *, seed: int | None = None, debug: bool | None = None, width: int = 1):
    """Run every grid value; returns ``(results, best_index)``.

    ``results`` is a list of ``(value, trace)`` in grid order. Runs are
    independent, so the outcome does not depend on ``width``. Non-finite
    final losses never win.
    """
    grid = [float(v) for v in grid]
    if not grid or any(not v > 0 for v in grid):
        raise ConfigError("grid: expected positive values")

    def one(v):
        return run_setup(setup, seed=seed, debug=debug, value=v)

    if width > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=min(width, len(grid))) as pool:
            traces = list(pool.map(one, grid))
    else:
        traces = [one(v) for v in grid]
    losses = [final_loss(t) for t in traces]
    finite = [i for i, l in enumerate(losses) if math.isfinite(l)]
    best = min(finite, key=lambda i: losses[i]) if finite else None
    return list(zip(grid, traces)), best
