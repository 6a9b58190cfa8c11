"""Experiment configuration: TOML files validated against a fixed schema.

Unknown keys are rejected. Every validation failure raises
:class:`ConfigError`, which the command line maps to exit code 2.
"""

from __future__ import annotations

import copy
import numbers
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

__all__ = ["ConfigError", "load_config", "parse_config", "validate", "DEFAULTS"]


class ConfigError(ValueError):
    pass


def _num(lo=None, hi=None, lo_open=False, integer=False):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, numbers.Real):
            raise ConfigError(f"{key}: expected a number, got {v!r}")
        if integer and int(v) != v:
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise ConfigError(f"{key}: must be {'>' if lo_open else '>='} {lo}, got {v!r}")
        if hi is not None and v > hi:
            raise ConfigError(f"{key}: must be <= {hi}, got {v!r}")
    return check


def _choice(*options):
    def check(key, v):
        if v not in options:
            raise ConfigError(f"{key}: expected one of {', '.join(options)}, got {v!r}")
    return check


def _kind(t, name):
    def check(key, v):
        if isinstance(v, bool) and t is not bool:
            raise ConfigError(f"{key}: expected {name}, got {v!r}")
        if not isinstance(v, t):
            raise ConfigError(f"{key}: expected {name}, got {v!r}")
    return check


def _grid(key, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key}: expected a non-empty list of positive numbers")
    for i, item in enumerate(v):
        _num(0, lo_open=True)(f"{key}[{i}]", item)


def _center(key, v):
    if not isinstance(v, list):
        raise ConfigError(f"{key}: expected a list of numbers")
    for i, item in enumerate(v):
        _num()(f"{key}[{i}]", item)


_POS = _num(0, lo_open=True)
_NONNEG = _num(0)
_POS_INT = _num(1, integer=True)
_NONNEG_INT = _num(0, integer=True)
_BOOL = _kind(bool, "true/false")
_STR = _kind(str, "a string")

SCHEMA = {
    "seed": _NONNEG_INT,
    "output_dir": _STR,
    "debug": _BOOL,
    "m": _num(1),
    "problem": {
        "type": _choice("softmax", "logistic"),
        "d": _POS_INT,
        "k": _POS_INT,
        "mu": _POS,
        "seed": _NONNEG_INT,
        "csv_path": _STR,
        "normalize": _BOOL,
        "header": _BOOL,
        "N": _POS_INT,
        "classes": _num(2, integer=True),
        "positive_class": _NONNEG_INT,
        "split": _choice("rows", "replicate"),
        "x0": _num(),
        "L": _POS,
        "ell": _POS,
        "F_star": _num(),
    },
    "noise": {"sigma": _NONNEG, "batch_size": _POS_INT},
    "clients": {"n": _POS_INT, "frac_random": _num(0, 1)},
    "compressor": {"kind": _choice("top_k", "identity"), "k_frac": _num(0, 1, lo_open=True)},
    "composite": {"kind": _choice("zero", "l1", "ball"), "lambda": _NONNEG, "radius": _POS, "center": _center},
    "mechanism": {"kind": _choice("econtrol", "ef", "ef21"), "eta": _num(0, 1, lo_open=True)},
    "algorithm": {
        "kind": _choice("econtrol_da", "prox_ef", "prox_ef21"),
        "T": _NONNEG_INT,
        "a_t": _POS,
        "initial_step": _BOOL,
        "eta": _num(0, 1, lo_open=True),
        "R0": _POS,
        "stepsize": {
            "preset": _choice("fixed_theorem", "variable_theorem", "real_iterates", "constant", "grid"),
            "gamma": _POS,
            "inv_gamma": _POS,
            "h": _POS,
            "grid": _grid,
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "output_dir": "out",
    "debug": False,
    "problem": {"type": "softmax", "d": 200, "k": 2048, "mu": 0.1, "seed": 0, "normalize": False,
                "header": False, "N": 2000, "classes": 2, "positive_class": 0, "split": "rows"},
    "noise": {"sigma": 0.0},
    "clients": {"n": 1, "frac_random": 1.0},
    "compressor": {"kind": "top_k", "k_frac": 0.1},
    "composite": {"kind": "zero", "lambda": 0.0},
    "mechanism": {},
    "algorithm": {"kind": "econtrol_da", "T": 1000, "a_t": 1.0, "initial_step": False,
                  "stepsize": {"preset": "fixed_theorem"}},
}

MECHANISM_OF = {"econtrol_da": "econtrol", "prox_ef": "ef", "prox_ef21": "ef21"}


def _walk(schema, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a table")
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            raise ConfigError(f"unknown key {path!r}")
        rule = schema[key]
        if isinstance(rule, dict):
            _walk(rule, value, path)
        else:
            rule(path, value)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> dict:
    """Check ``raw`` against the schema and return it merged over defaults."""
    _walk(SCHEMA, raw, "")
    cfg = _merge(DEFAULTS, raw)
    alg = cfg["algorithm"]
    mech = cfg["mechanism"].get("kind")
    if mech is not None and mech != MECHANISM_OF[alg["kind"]]:
        raise ConfigError(f"mechanism.kind {mech!r} does not match algorithm.kind {alg['kind']!r}")
    cfg["mechanism"]["kind"] = MECHANISM_OF[alg["kind"]]
    if "eta" in cfg["mechanism"] and "eta" in alg and cfg["mechanism"]["eta"] != alg["eta"]:
        raise ConfigError("mechanism.eta and algorithm.eta disagree")
    step = alg["stepsize"]
    spelled = [k for k in ("gamma", "inv_gamma", "h") if k in step]
    if "preset" not in raw.get("algorithm", {}).get("stepsize", {}):
        if spelled:
            step["preset"] = "constant"
        elif "grid" in step:
            step["preset"] = "grid"
    if len(spelled) > 1:
        raise ConfigError(f"algorithm.stepsize: give only one of gamma, inv_gamma, h (got {spelled})")
    if step["preset"] == "constant" and not spelled:
        raise ConfigError("algorithm.stepsize: constant preset needs gamma, inv_gamma or h")
    if step["preset"] == "grid" and "grid" not in step:
        raise ConfigError("algorithm.stepsize: grid preset needs a grid list")
    if alg["kind"] != "econtrol_da" and step["preset"] in ("fixed_theorem", "variable_theorem", "real_iterates"):
        raise ConfigError(f"{alg['kind']} needs a constant or grid stepsize, not {step['preset']!r}")
    prob = cfg["problem"]
    if prob["type"] == "softmax" and "batch_size" in cfg["noise"]:
        raise ConfigError("noise.batch_size only applies to sample-based problems")
    return cfg


def parse_config(text: str) -> dict:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from None
    return validate(raw)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
