"""The composite term psi and its proximal solvers.

Three closed-form cases are supported: ``zero``, ``l1`` (``lam * ||x||_1``) and
``ball`` (indicator of a Euclidean ball). Every solver goes through
:func:`composite_prox`, which minimizes

    <S, x> + A * psi(x) + (gamma / 2) * ||x - x0||^2 .
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CompositePart", "zero", "l1", "ball", "from_config", "psi_value",
           "composite_prox", "prox_step", "soft_threshold"]


@dataclass(frozen=True)
class CompositePart:
    kind: str = "zero"
    lam: float = 0.0
    radius: float = 1.0
    center: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("zero", "l1", "ball"):
            raise ValueError(f"unknown composite kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.kind == "ball" and not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "l1" and self.lam == 0.0)

    def value(self, x) -> float:
        return psi_value(self, x)


def zero() -> CompositePart:
    return CompositePart("zero")


def l1(lam: float) -> CompositePart:
    return CompositePart("l1", lam=float(lam))


def ball(radius: float, center=None) -> CompositePart:
    c = None if center is None else np.asarray(center, dtype=np.float64)
    return CompositePart("ball", radius=float(radius), center=c)


def from_config(section: dict) -> CompositePart:
    kind = section.get("kind", "zero")
    if kind == "l1":
        return l1(section.get("lambda", 0.0))
    if kind == "ball":
        return ball(section["radius"], section.get("center"))
    return CompositePart(kind)


def _center(psi: CompositePart, d: int) -> np.ndarray:
    if psi.center is None:
        return np.zeros(d)
    return psi.center


def psi_value(psi: CompositePart, x) -> float:
    """Value of psi at ``x``; ``math.inf`` outside the ball, never NaN."""
    x = np.asarray(x, dtype=np.float64)
    if psi.kind == "zero":
        return 0.0
    if psi.kind == "l1":
        return psi.lam * float(np.abs(x).sum())
    dist = float(np.linalg.norm(x - _center(psi, x.size)))
    # tolerate roundoff from the projection itself
    return 0.0 if dist <= psi.radius * (1 + 1e-12) else math.inf


def soft_threshold(v: np.ndarray, level: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - level, 0.0)


def composite_prox(psi: CompositePart, S, A: float, gamma: float, x0) -> np.ndarray:
    """argmin_x <S, x> + A psi(x) + (gamma/2) ||x - x0||^2."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not A > 0:
        raise ValueError("A must be positive")
    S = np.asarray(S, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if S.shape != x0.shape:
        raise ValueError("S and x0 lengths differ")
    z = x0 - S / gamma
    if psi.kind == "zero":
        return z
    if psi.kind == "l1":
        return soft_threshold(z, A * psi.lam / gamma)
    c = _center(psi, z.size)
    u = z - c
    r = float(np.linalg.norm(u))
    if r <= psi.radius:
        return z
    return c + u * (psi.radius / r)


def prox_step(psi: CompositePart, g, x, h: float) -> np.ndarray:
    """Proximal gradient step: argmin h[<g, x'> + psi(x')] + ||x' - x||^2 / 2."""
    if not h > 0:
        raise ValueError("h must be positive")
    return composite_prox(psi, g, 1.0, 1.0 / h, x)
