"""Command line entry point: ``compoda {run,sweep,check,gen}``.

Exit codes: 0 success, 1 runtime or check failure, 2 configuration error.
Errors go to stderr as one line ``compoda: error[<kind>]: <detail>``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import composite, diagnostics, experiment
from .compressors import identity, top_k, verify_contraction
from .config import ConfigError, load_config, validate
from .problems import gen_logistic_dataset, gen_softmax, save_softmax, write_csv_dataset

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class CheckFailed(RuntimeError):
    pass


def _error(kind: str, detail) -> None:
    text = " ".join(str(detail).split())
    print(f"compoda: error[{kind}]: {text}", file=sys.stderr)


def _sig(v):
    if isinstance(v, float):
        return float(f"{v:.9g}") if math.isfinite(v) else str(v)
    return v


def _atomic_write(path: Path, write) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: Path, text: str) -> None:
    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    _atomic_write(path, w)


def _summary(trace) -> dict:
    s = {k: _sig(v) for k, v in trace.summary().items()}
    s.update({k: _sig(v) for k, v in trace.config.items()})
    return s


def _emit_run(trace, out_dir: Path) -> dict:
    _atomic_write(out_dir / "trace.csv", lambda tmp: diagnostics.write_trace_csv(trace, tmp))
    summary = _summary(trace)
    _write_text(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "debug", False):
        cfg["debug"] = True
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out if args.out is not None else cfg["output_dir"])


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    cfg = _load(args)
    setup, trace = experiment.run_config(cfg)
    summary = _emit_run(trace, _out_dir(args, cfg))
    for key in ("rounds", "F_real", "F_virtual", "F_bar", "comm_cost"):
        print(f"{key} = {summary[key]}")
    return EXIT_OK


def _parse_grid(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--grid: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError("--grid: empty")
    return values


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if args.grid is not None:
        grid = _parse_grid(args.grid)
    elif "grid" in cfg["algorithm"]["stepsize"]:
        grid = cfg["algorithm"]["stepsize"]["grid"]
    else:
        raise ConfigError("sweep needs --grid or algorithm.stepsize.grid")
    width = experiment.sweep_width()
    setup = experiment.build(cfg)
    results, best = experiment.sweep(setup, grid, width=width)
    out = _out_dir(args, cfg)
    rows = []
    for v, trace in results:
        summary = _emit_run(trace, out / f"grid_{v:g}")
        rows.append({"value": v, **summary})
    table = {"grid": grid, "best_value": None if best is None else grid[best], "runs": rows}
    _write_text(out / "sweep_summary.json", json.dumps(table, indent=2, sort_keys=True) + "\n")
    print(f"{'value':>12} {'F_real':>16} {'F_bar':>16} {'comm_cost':>12}")
    for i, row in enumerate(rows):
        mark = " *" if i == best else ""
        print(f"{row['value']:>12g} {row['F_real']!s:>16} {row['F_bar']!s:>16} {row['comm_cost']!s:>12}{mark}")
    if best is None:
        raise RuntimeError("every grid point diverged")
    return EXIT_OK


_BATTERY_INSTANCE = {
    "seed": 0,
    "problem": {"type": "softmax", "d": 50, "k": 256, "mu": 0.1, "seed": 0},
    "clients": {"n": 4},
    "compressor": {"kind": "top_k", "k_frac": 0.2},
    "composite": {"kind": "l1", "lambda": 0.1},
    "noise": {"sigma": 5.0},
    "algorithm": {"kind": "econtrol_da", "T": 200},
}


def battery(cfg: dict | None = None, rng_seed: int = 0) -> list:
    """Run every diagnostic and return the list of :class:`CheckReport`."""
    reports = []
    rng = np.random.default_rng(rng_seed)

    if cfg is None or cfg["compressor"]["kind"] == "top_k":
        pairs = [(10, 1), (10, 5), (200, 20)]
        if cfg is not None:
            d = cfg["problem"]["d"]
            pairs = [(d, max(1, round(cfg["compressor"]["k_frac"] * d)))]
        for d, k in pairs:
            rep = verify_contraction(top_k(k, d), 2000, rng)
            reports.append(diagnostics.CheckReport(f"contraction top_{k}/{d}", rep.passed, rep.max_ratio,
                                                   rep.bound, rep.bound - rep.max_ratio))
    else:
        rep = verify_contraction(identity(cfg["problem"]["d"]), 200, rng)
        reports.append(diagnostics.CheckReport("contraction identity", rep.passed, rep.max_ratio,
                                               rep.bound, rep.bound - rep.max_ratio))

    worst = 0.0
    for _ in range(60):
        d = int(rng.integers(1, 6))
        S, x0 = 3.0 * rng.standard_normal(d), rng.standard_normal(d)
        A, gamma = rng.uniform(0.1, 3.0), rng.uniform(0.1, 5.0)
        for psi in (composite.zero(), composite.l1(rng.uniform(0, 2)),
                    composite.ball(rng.uniform(0.1, 2), rng.standard_normal(d))):
            gap = np.max(np.abs(composite.composite_prox(psi, S, A, gamma, x0)
                                - diagnostics.brute_force_prox(psi, S, A, gamma, x0)))
            worst = max(worst, float(gap))
    reports.append(diagnostics.CheckReport("prox vs golden-section", worst <= 1e-6, worst, 1e-6, 1e-6 - worst))

    run_cfg = validate(_BATTERY_INSTANCE) if cfg is None else dict(cfg)
    if run_cfg["algorithm"]["kind"] == "econtrol_da":
        setup = experiment.build(run_cfg)
        trace = experiment.run_setup(setup, debug=True)
        reports.append(diagnostics.check_virtual_real(trace))
        dbg = trace.debug
        reports.extend(diagnostics.check_econtrol_sums(dbg["clients"], dbg["delta"]))
        reports.append(diagnostics.check_consecutive_distance(trace, setup.L_cert))

    T = 10
    reports.append(diagnostics.sampling_distribution_test(np.ones(T), T, 20000, rng))
    return reports


def cmd_check(args) -> int:
    cfg = _load(args) if args.config is not None else None
    reports = battery(cfg)
    failed = [r for r in reports if not r.passed]
    for r in reports:
        print(r.line())
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    if failed:
        raise CheckFailed("; ".join(r.line() for r in failed))
    return EXIT_OK


_GEN_DEFAULTS = {
    "softmax": {"d": 200, "k": 2048, "mu": 0.1, "seed": 0},
    "logistic": {"N": 1000, "d": 20, "seed": 0, "classes": 2},
}


def _gen_params(kind, items):
    params = dict(_GEN_DEFAULTS[kind])
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or key not in params:
            raise ConfigError(f"gen {kind}: unknown parameter {item!r} (known: {', '.join(params)})")
        try:
            params[key] = float(value) if key == "mu" else int(value)
        except ValueError:
            raise ConfigError(f"gen {kind}: {key} must be numeric, got {value!r}") from None
    return params


def cmd_gen(args) -> int:
    params = _gen_params(args.kind, args.params)
    if args.out is None:
        raise ConfigError("gen needs --out PATH")
    out = Path(args.out)
    try:
        if args.kind == "softmax":
            p = gen_softmax(params["d"], params["k"], params["mu"], params["seed"])
            _atomic_write(out, lambda tmp: save_softmax(p, tmp))
        else:
            X, y = gen_logistic_dataset(params["N"], params["d"], params["seed"], classes=params["classes"])
            _atomic_write(out, lambda tmp: write_csv_dataset(tmp, X, y))
    except ValueError as exc:
        raise ConfigError(f"gen {args.kind}: {exc}") from None
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compoda", description="Compressed composite optimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--debug", action="store_true")

    p = sub.add_parser("run", help="run one configured experiment")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="run a stepsize grid and report the best point")
    common(p)
    p.add_argument("--grid", metavar="v1,v2,...", help="1/gamma for dual averaging, h for baselines")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("check", help="run the diagnostic battery")
    common(p, config_required=False)
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("gen", help="write a synthetic instance")
    p.add_argument("kind", choices=sorted(_GEN_DEFAULTS))
    p.add_argument("params", nargs="*", metavar="key=value")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as configuration errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        _error("config", exc)
        return EXIT_CONFIG
    except CheckFailed as exc:
        _error("check", exc)
        return EXIT_FAIL
    except (OSError, ValueError, RuntimeError, FloatingPointError, ArithmeticError) as exc:
        _error("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
