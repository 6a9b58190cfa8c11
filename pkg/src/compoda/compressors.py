"""Contractive compression operators.

A compressor ``C`` is contractive with parameter ``delta`` in (0, 1] when
``||C(s) - s||^2 <= (1 - delta) ||s||^2``. Top-K satisfies this for every call
(not only in expectation) with ``delta = k / d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import derive_stream

__all__ = ["Compressor", "ContractionReport", "top_k", "identity", "compress",
           "contraction_delta", "verify_contraction", "from_config"]

_KINDS = ("top_k", "identity")


@dataclass(frozen=True)
class Compressor:
    kind: str
    d: int
    k: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown compressor kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "top_k":
            if self.k is None or not 1 <= self.k <= self.d:
                raise ValueError(f"top_k needs 1 <= k <= d, got k={self.k}, d={self.d}")

    @property
    def delta(self) -> float:
        return contraction_delta(self)

    def __call__(self, s, rng=None):
        return compress(self, s, rng)


def top_k(k: int, d: int) -> Compressor:
    return Compressor("top_k", d, k)


def identity(d: int) -> Compressor:
    return Compressor("identity", d)


def from_config(section: dict, d: int) -> Compressor:
    """Build from ``{kind, k_frac}``; ``k = max(1, round(k_frac * d))``."""
    kind = section.get("kind", "top_k")
    if kind == "identity":
        return identity(d)
    k_frac = float(section["k_frac"])
    if not 0 < k_frac <= 1:
        raise ValueError("k_frac must lie in (0, 1]")
    return top_k(min(d, max(1, int(round(k_frac * d)))), d)


def compress(c: Compressor, s, rng=None) -> np.ndarray:
    """Apply ``c`` to ``s``. ``rng`` is unused by the deterministic operators."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (c.d,):
        raise ValueError(f"expected length {c.d}, got {s.shape}")
    if c.kind == "identity" or c.k == c.d:
        return s.copy()
    # stable sort on -|s|: equal magnitudes keep the lowest index
    keep = np.argsort(-np.abs(s), kind="stable")[: c.k]
    out = np.zeros_like(s)
    out[keep] = s[keep]
    return out


def contraction_delta(c: Compressor) -> float:
    if c.kind == "identity":
        return 1.0
    return c.k / c.d


@dataclass
class ContractionReport:
    max_ratio: float
    bound: float
    passed: bool
    trials: int
    offending_seed: int | None = None

    def __str__(self):
        status = "PASS" if self.passed else f"FAIL (trial seed {self.offending_seed})"
        return f"max_ratio={self.max_ratio:.6g} bound={self.bound:.6g} {status}"


def verify_contraction(c: Compressor, trials: int, rng: np.random.Generator | int) -> ContractionReport:
    """Worst ``||C(s) - s||^2 / ||s||^2`` over standard-normal draws.

    Each trial vector comes from its own seed (drawn from ``rng``) so that a
    violating vector can be regenerated from the report.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if isinstance(rng, (int, np.integer)):
        rng = derive_stream(int(rng), 0)
    bound = 1.0 - contraction_delta(c) + 1e-12
    seeds = rng.integers(0, 2**63 - 1, size=trials)
    worst, worst_seed = 0.0, None
    for seed in seeds:
        s = np.random.default_rng(int(seed)).standard_normal(c.d)
        total = float(s @ s)
        if total == 0.0:
            continue
        r = compress(c, s) - s
        ratio = float(r @ r) / total
        if ratio > worst:
            worst = ratio
            worst_seed = int(seed)
    passed = worst <= bound
    return ContractionReport(worst, bound, passed, trials, None if passed else worst_seed)
