"""Smooth finite-sum objectives, their stochastic oracles, data generation and
client partitioning.

The smooth part is always ``f = (1/n) sum_i f_i`` where client ``i`` owns
``f_i``. Two families are provided: the smoothed max (softmax / log-sum-exp)
objective and binary logistic regression. A quadratic family is included for
tests and demos because its smoothness constants are known exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .numkit import derive_stream, ordered_mean

__all__ = [
    "SoftmaxProblem", "gen_softmax", "softmax_value", "softmax_gradient",
    "SoftmaxObjective", "LogisticObjective", "QuadraticObjective",
    "SmoothOracle", "split_softmax_to_clients", "logistic_oracle",
    "quadratic_oracle", "ClientPartition", "partition_heterogeneous",
    "load_csv_dataset", "gen_logistic_dataset", "write_csv_dataset",
    "save_softmax", "load_softmax", "estimate_smoothness",
]

# stream ids reserved for data generation; client streams use 0..n-1
_GEN_STREAM = 1 << 40
_SPLIT_STREAM = (1 << 40) + 1


# --------------------------------------------------------------------------
# softmax


@dataclass(frozen=True)
class SoftmaxProblem:
    """f(x) = mu * log sum_i exp((<a_i, x> - b_i) / mu)."""

    A: np.ndarray
    b: np.ndarray
    mu: float
    recentred: bool = True

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def k(self) -> int:
        return self.A.shape[0]

    def value(self, x) -> float:
        return softmax_value(self, x)

    def gradient(self, x) -> np.ndarray:
        return softmax_gradient(self, x)


def _softmax_parts(A, b, mu, x):
    z = (A @ x - b) / mu
    zmax = z.max()
    w = np.exp(z - zmax)
    s = w.sum()
    return zmax, w, s


def softmax_value(p: SoftmaxProblem, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(p.mu * logsumexp((p.A @ x - p.b) / p.mu))


def softmax_gradient(p: SoftmaxProblem, x) -> np.ndarray:
    """sum_i w_i a_i with w = softmax((A x - b) / mu), max-subtracted."""
    x = np.asarray(x, dtype=np.float64)
    _, w, s = _softmax_parts(p.A, p.b, p.mu, x)
    return p.A.T @ (w / s)


def gen_softmax(d: int, k: int, mu: float, seed: int) -> SoftmaxProblem:
    """Random instance with rows and offsets drawn from U[-1, 1].

    The rows are then shifted by the gradient at the origin of the raw
    instance. Softmax weights at 0 only depend on ``b``, so after the shift the
    gradient at 0 vanishes and 0 minimizes both ``f`` and ``f + lam ||x||_1``.
    """
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    if not mu > 0:
        raise ValueError("mu must be positive")
    rng = derive_stream(seed, _GEN_STREAM)
    A_hat = rng.uniform(-1.0, 1.0, size=(k, d))
    b = rng.uniform(-1.0, 1.0, size=k)
    raw = SoftmaxProblem(A_hat, b, float(mu), recentred=False)
    A = A_hat - softmax_gradient(raw, np.zeros(d))[None, :]
    return SoftmaxProblem(A, b, float(mu), recentred=True)


def save_softmax(p: SoftmaxProblem, path) -> None:
    """Write ``A``, ``b`` and ``mu`` as an ``.npz`` archive."""
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, A=p.A, b=p.b, mu=np.float64(p.mu), recentred=np.bool_(p.recentred))


def load_softmax(path) -> SoftmaxProblem:
    with np.load(path) as data:
        return SoftmaxProblem(data["A"], data["b"], float(data["mu"]), bool(data["recentred"]))


# --------------------------------------------------------------------------
# client objectives


class SoftmaxObjective:
    def __init__(self, A, b, mu):
        self.A = np.asarray(A, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.mu = float(mu)
        self.n_samples = None  # not a finite sum over rows

    def value(self, x):
        return float(self.mu * logsumexp((self.A @ x - self.b) / self.mu))

    def gradient(self, x):
        _, w, s = _softmax_parts(self.A, self.b, self.mu, x)
        return self.A.T @ (w / s)

    def smoothness_bound(self) -> float:
        # the Hessian is A^T (diag(p) - p p^T) A / mu, a covariance of the rows
        return float(np.max(np.sum(self.A**2, axis=1))) / self.mu


class LogisticObjective:
    """Mean of log(1 + exp(-s_j <x, phi_j>)) with signs s_j = 2 y_j - 1."""

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=np.float64)
        self.signs = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
        self.n_samples = self.X.shape[0]
        if self.n_samples == 0:
            raise ValueError("client holds no samples")

    def value(self, x, idx=None):
        X, s = (self.X, self.signs) if idx is None else (self.X[idx], self.signs[idx])
        return float(np.mean(np.logaddexp(0.0, -s * (X @ x))))

    def gradient(self, x, idx=None):
        X, s = (self.X, self.signs) if idx is None else (self.X[idx], self.signs[idx])
        coef = -s * expit(-s * (X @ x))
        return X.T @ coef / X.shape[0]

    def smoothness_bound(self) -> float:
        return float(np.linalg.norm(self.X, 2) ** 2) / (4.0 * self.n_samples)


class QuadraticObjective:
    """(curvature / 2) * ||x - center||^2."""

    def __init__(self, center, curvature=1.0):
        self.center = np.asarray(center, dtype=np.float64)
        self.curvature = float(curvature)
        self.n_samples = None

    def value(self, x):
        r = x - self.center
        return 0.5 * self.curvature * float(r @ r)

    def gradient(self, x):
        return self.curvature * (x - self.center)

    def smoothness_bound(self) -> float:
        return self.curvature


class SmoothOracle:
    """Finite-sum oracle ``f = (1/n) sum_i f_i`` over client objectives."""

    def __init__(self, clients: Sequence, d: int):
        if len(clients) == 0:
            raise ValueError("need at least one client")
        self.clients = list(clients)
        self.d = int(d)

    @property
    def n(self) -> int:
        return len(self.clients)

    def client_value(self, i, x) -> float:
        return self.clients[i].value(np.asarray(x, dtype=np.float64))

    def client_gradient(self, i, x) -> np.ndarray:
        return self.clients[i].gradient(np.asarray(x, dtype=np.float64))

    def value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        total = 0.0
        for c in self.clients:
            total += c.value(x)
        return total / self.n

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return ordered_mean([c.gradient(x) for c in self.clients])

    def smoothness_bound(self) -> float:
        """Certified upper bound on the smoothness constant of ``f``."""
        return sum(c.smoothness_bound() for c in self.clients) / self.n

    def stochastic_client_gradient(self, i, x, sigma, rng, batch_size=None) -> np.ndarray:
        """Client gradient plus N(0, sigma^2/d I) noise, so E||noise||^2 = sigma^2.

        With ``batch_size`` the exact gradient is replaced by a minibatch
        gradient (sampled without replacement) before the noise is added.
        """
        x = np.asarray(x, dtype=np.float64)
        client = self.clients[i]
        if batch_size is None or (client.n_samples is not None and batch_size >= client.n_samples):
            g = client.gradient(x)
        else:
            if client.n_samples is None:
                raise ValueError("minibatches need a sample-based objective")
            idx = rng.choice(client.n_samples, size=batch_size, replace=False)
            g = client.gradient(x, idx)
        if sigma > 0:
            g = g + rng.standard_normal(self.d) * (sigma / np.sqrt(self.d))
        return g


def split_softmax_to_clients(p: SoftmaxProblem, n: int, seed: int = 0, mode: str = "rows") -> SmoothOracle:
    """Distribute a softmax instance over ``n`` clients.

    ``rows``: rows are shuffled and dealt into ``n`` groups; client ``i`` owns
    the softmax over its own rows, so for ``n > 1`` the average differs from
    the single-machine objective. ``replicate``: every client owns the full
    objective (homogeneous clients, only the gradient noise differs).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if mode == "replicate" or n == 1:
        return SmoothOracle([SoftmaxObjective(p.A, p.b, p.mu) for _ in range(n)], p.d)
    if mode != "rows":
        raise ValueError(f"unknown split mode {mode!r}")
    if p.k < n:
        raise ValueError("need at least one row per client")
    order = derive_stream(seed, _SPLIT_STREAM).permutation(p.k)
    groups = np.array_split(order, n)
    return SmoothOracle([SoftmaxObjective(p.A[g], p.b[g], p.mu) for g in groups], p.d)


def quadratic_oracle(centers, curvature=1.0) -> SmoothOracle:
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    return SmoothOracle([QuadraticObjective(c, curvature) for c in centers], centers.shape[1])


# --------------------------------------------------------------------------
# datasets and partitioning


@dataclass
class ClientPartition:
    assignments: list
    n: int

    def sizes(self):
        return [len(a) for a in self.assignments]


def partition_heterogeneous(N: int, labels, n: int, frac_random: float, seed: int) -> ClientPartition:
    """Split sample indices ``0..N-1`` among ``n`` clients.

    A ``frac_random`` share of the (shuffled) samples is dealt evenly across
    clients; every remaining sample with label ``c`` goes to client
    ``c mod n``.
    """
    labels = np.asarray(labels)
    if n < 1:
        raise ValueError("n must be positive")
    if n > N:
        raise ValueError(f"more clients ({n}) than samples ({N})")
    if labels.shape != (N,):
        raise ValueError("need one label per sample")
    if not 0.0 <= frac_random <= 1.0:
        raise ValueError("frac_random must lie in [0, 1]")
    if frac_random < 1.0 and n > len(np.unique(labels)):
        raise ValueError("label routing needs at least as many distinct labels as clients")
    rng = derive_stream(seed, _SPLIT_STREAM)
    order = rng.permutation(N)
    n_random = int(round(frac_random * N))
    shares = np.array_split(order[:n_random], n)
    rest = order[n_random:]
    owner = labels[rest].astype(np.int64) % n
    assignments = [np.sort(np.concatenate([shares[i], rest[owner == i]])) for i in range(n)]
    empty = [i for i, a in enumerate(assignments) if a.size == 0]
    if empty:
        raise ValueError(f"clients {empty} received no samples")
    return ClientPartition(assignments, n)


def logistic_oracle(X, y, partition: ClientPartition) -> SmoothOracle:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    return SmoothOracle([LogisticObjective(X[idx], y[idx]) for idx in partition.assignments], X.shape[1])


def load_csv_dataset(path, header: bool = False, normalize: bool = False):
    """Read ``label,feature_1,...,feature_d`` rows into ``(X, y)``.

    Raises ``ValueError`` naming the offending line for ragged rows or
    non-numeric cells. ``normalize`` min-max scales each feature to [0, 1].
    """
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ValueError(f"line {lineno}: expected a label and at least one feature")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"line {lineno}: expected {width - 1} features, got {len(row) - 1}")
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-numeric cell ({exc})") from None
            labels.append(values[0])
            rows.append(values[1:])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    y = np.array(labels)
    if np.all(y == np.round(y)):
        y = y.astype(np.int64)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite feature values")
    if normalize:
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = (X - lo) / span
    return X, y


def gen_logistic_dataset(N: int, d: int, seed: int, classes: int = 2, spread: float = 1.0):
    """Gaussian class clusters: features = class mean + N(0, spread^2 I)."""
    if N < 1 or d < 1 or classes < 2:
        raise ValueError("need N, d >= 1 and at least two classes")
    rng = derive_stream(seed, _GEN_STREAM)
    means = rng.standard_normal((classes, d))
    y = rng.integers(0, classes, size=N)
    X = means[y] + spread * rng.standard_normal((N, d))
    return X, y


def write_csv_dataset(path, X, y) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for label, row in zip(y, X):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# smoothness


def estimate_smoothness(oracle: SmoothOracle, probes: int, rng, center=None, radius: float = 1.0):
    """Empirical (L_hat, ell_hat) over all pairs of random probe points.

    Both are lower bounds on the true constants:
    ``L_hat`` from the averaged gradient, ``ell_hat`` from the root-mean-square
    of client gradient differences.
    """
    if probes < 2:
        raise ValueError("need at least two probes")
    d = oracle.d
    c = np.zeros(d) if center is None else np.asarray(center, dtype=np.float64)
    pts = c + radius * rng.standard_normal((probes, d)) / np.sqrt(d)
    client_grads = np.array([[oracle.client_gradient(i, x) for i in range(oracle.n)] for x in pts])
    full = client_grads.mean(axis=1)
    L_hat = ell_hat = 0.0
    for a, b in combinations(range(probes), 2):
        dist = np.linalg.norm(pts[a] - pts[b])
        if dist == 0.0:
            continue
        L_hat = max(L_hat, np.linalg.norm(full[a] - full[b]) / dist)
        diffs = client_grads[a] - client_grads[b]
        ell_hat = max(ell_hat, np.sqrt(np.mean(np.sum(diffs * diffs, axis=1))) / dist)
    return float(L_hat), float(ell_hat)
