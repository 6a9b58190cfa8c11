"""Client-side error-feedback mechanisms.

Each client owns one state object and calls its ``step`` once per round with
its fresh stochastic gradient; the return value is the vector it sends to the
server. Three mechanisms are provided:

* :class:`EControlClient` compresses ``g_t - g_hat_{t-1} - eta * e_t`` and
  keeps the running error ``e``.
* :class:`EFClient` is classic error feedback (compress ``g_t - e_t``).
* :class:`EF21Client` compresses the gradient difference ``g_t - g_hat_{t-1}``.

The error update ``e_{t+1} = e_t + g_hat_t - g_t`` is evaluated through the
algebraically equal increment ``(C(delta) - delta) + correction``. This keeps
``e`` exactly zero under an exact compressor instead of accumulating roundoff,
and the increment is what the debug logs record as ``g_hat_t - g_t``.
"""

from __future__ import annotations

import math

import numpy as np

from .compressors import Compressor, compress

__all__ = ["eta_default", "econtrol_factors", "EControlClient", "EFClient",
           "EF21Client", "make_client"]


def eta_default(delta: float) -> float:
    """delta / (3 sqrt(1 - delta) (1 + sqrt(1 - delta))), and 1 at delta = 1.

    At ``delta = 1`` the closed form divides by zero; the compressor is exact
    there, so the error stays zero for any eta and 1 is used.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if delta == 1.0:
        return 1.0
    r = math.sqrt(1.0 - delta)
    return delta / (3.0 * r * (1.0 + r))


def econtrol_factors(delta: float) -> tuple[float, float]:
    """Constants bounding the EControl error sums by gradient-difference sums.

    Returns ``(c_err, c_est)`` with

    * sum_{t=1..T} ||e_t||^2 <= c_err * sum_{t=0..T-2} ||g_{t+1} - g_t||^2
    * sum_{t=0..T-1} ||g_hat_t - g_t||^2 <= c_est * (same sum)
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    q = 1.0 - delta
    r = math.sqrt(q)
    c_err = 81.0 * q**2 * (1.0 + r) ** 4 / (2.0 * delta**4)
    c_est = 36.0 * q * (1.0 + r) ** 2 / delta**2
    return c_err, c_est


def _check(vec, d):
    if vec.shape != (d,):
        raise ValueError(f"expected length {d}, got {vec.shape}")


class EControlClient:
    """EControl state: previous estimate ``g_hat``, error ``e`` and the
    reservoir pair (running cumulative gradient, frozen snapshot)."""

    def __init__(self, g_hat_init, eta: float, e_init=None, debug: bool = False):
        self.g_hat = np.array(g_hat_init, dtype=np.float64, copy=True)
        d = self.g_hat.size
        self.e = np.zeros(d) if e_init is None else np.array(e_init, dtype=np.float64, copy=True)
        self.eta = float(eta)
        self.g_bar_running = np.zeros(d)
        self.g_bar_frozen = np.zeros(d)
        self.debug = debug
        self.shadow_e = self.e.copy() if debug else None
        self.log = {"g": [], "g_hat": [], "e": [], "est_err": []} if debug else None

    @property
    def d(self):
        return self.g_hat.size

    def step(self, g, compressor: Compressor, rng=None) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        _check(g, self.d)
        if self.debug:
            self.log["e"].append(self.e.copy())
        correction = -self.eta * self.e
        delta = (g - self.g_hat) + correction
        Delta = compress(compressor, delta, rng)
        self.g_hat = self.g_hat + Delta
        err = (Delta - delta) + correction  # == g_hat_t - g_t
        self.e = self.e + err
        if self.debug:
            self.shadow_e += err
            self.log["g"].append(g.copy())
            self.log["g_hat"].append(self.g_hat.copy())
            self.log["est_err"].append(err)
        return Delta

    def reservoir_update(self, g, a_t: float, tau: int) -> None:
        """Accumulate ``a_t * g`` and snapshot the running sum when ``tau == 1``."""
        self.g_bar_running = self.g_bar_running + a_t * np.asarray(g, dtype=np.float64)
        if tau:
            self.g_bar_frozen = self.g_bar_running.copy()


class EFClient:
    def __init__(self, d: int, e_init=None, debug: bool = False):
        self.e = np.zeros(d) if e_init is None else np.array(e_init, dtype=np.float64, copy=True)
        self.debug = debug
        self.shadow_e = self.e.copy() if debug else None
        self.log = {"g": [], "e": [], "est_err": []} if debug else None

    @property
    def d(self):
        return self.e.size

    def step(self, g, compressor: Compressor, rng=None) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        _check(g, self.d)
        if self.debug:
            self.log["e"].append(self.e.copy())
        delta = g - self.e
        g_hat = compress(compressor, delta, rng)
        err = (g_hat - delta) - self.e  # == g_hat_t - g_t
        self.e = self.e + err
        if self.debug:
            self.shadow_e += err
            self.log["g"].append(g.copy())
            self.log["est_err"].append(err)
        return g_hat


class EF21Client:
    def __init__(self, g_hat_init):
        self.g_hat = np.array(g_hat_init, dtype=np.float64, copy=True)

    @property
    def d(self):
        return self.g_hat.size

    def step(self, g, compressor: Compressor, rng=None) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        _check(g, self.d)
        delta = g - self.g_hat
        Delta = compress(compressor, delta, rng)
        # g_hat_{t-1} + Delta written as g - residual, exact for a lossless compressor
        self.g_hat = g - (delta - Delta)
        return Delta


def make_client(kind: str, g_init, eta: float | None = None, debug: bool = False):
    if kind == "econtrol":
        return EControlClient(g_init, eta, debug=debug)
    if kind == "ef":
        return EFClient(np.asarray(g_init).size, debug=debug)
    if kind == "ef21":
        return EF21Client(g_init)
    raise ValueError(f"unknown mechanism {kind!r}")
