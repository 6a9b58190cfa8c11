import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from compoda import compressors as C


def _best_single_keep(s):
    # brute force: try every single-entry keep and return the smallest residual
    best = None
    for j in range(len(s)):
        out = np.zeros_like(s)
        out[j] = s[j]
        r = float(np.sum((out - s) ** 2))
        if best is None or r < best[0]:
            best = (r, out)
    return best


def test_top1_example_against_enumeration():
    s = np.array([3.0, -1.0, 2.0])
    out = C.compress(C.top_k(1, 3), s)
    resid, brute = _best_single_keep(s)
    np.testing.assert_array_equal(out, brute)
    np.testing.assert_array_equal(out, [3.0, 0.0, 0.0])
    assert resid == 5.0
    assert resid <= (2 / 3) * 14


def test_tie_keeps_lowest_index():
    np.testing.assert_array_equal(C.compress(C.top_k(1, 2), np.array([2.0, -2.0])), [2.0, 0.0])
    np.testing.assert_array_equal(C.compress(C.top_k(2, 4), np.array([1.0, -1.0, 1.0, 1.0])), [1.0, -1.0, 0, 0])


def test_full_k_and_identity_are_exact(rng):
    s = rng.standard_normal(6)
    np.testing.assert_array_equal(C.compress(C.top_k(6, 6), s), s)
    np.testing.assert_array_equal(C.compress(C.identity(6), s), s)


def test_delta_values():
    assert C.contraction_delta(C.top_k(20, 200)) == 0.1
    assert C.contraction_delta(C.identity(5)) == 1.0
    assert C.contraction_delta(C.top_k(5, 5)) == 1.0
    assert C.top_k(3, 12).delta == 0.25


@pytest.mark.parametrize("k,d", [(0, 3), (4, 3)])
def test_invalid_k(k, d):
    with pytest.raises(ValueError):
        C.top_k(k, d)


def test_length_mismatch():
    with pytest.raises(ValueError):
        C.compress(C.top_k(1, 3), np.ones(4))


def test_zero_vector():
    np.testing.assert_array_equal(C.compress(C.top_k(2, 5), np.zeros(5)), np.zeros(5))


def test_from_config_rounding():
    assert C.from_config({"kind": "top_k", "k_frac": 0.1}, 200).k == 20
    assert C.from_config({"kind": "top_k", "k_frac": 0.001}, 50).k == 1
    assert C.from_config({"kind": "identity"}, 7).delta == 1.0


def test_verify_contraction_examples():
    assert C.verify_contraction(C.identity(4), 100, 0).max_ratio == 0.0
    rep = C.verify_contraction(C.top_k(1, 2), 10_000, 1)
    assert rep.passed and rep.max_ratio <= 0.5
    rep = C.verify_contraction(C.top_k(199, 200), 10_000, 2)
    assert rep.passed and rep.max_ratio <= 0.005


def test_verify_contraction_reports_offender(monkeypatch):
    c = C.top_k(1, 3)
    rep = C.verify_contraction(c, 50, 0)
    assert rep.passed and rep.offending_seed is None
    # an operator that drops everything violates the advertised delta = 1/3
    monkeypatch.setattr(C, "compress", lambda comp, s, rng=None: np.zeros_like(s))
    rep = C.verify_contraction(c, 50, 0)
    assert not rep.passed and rep.offending_seed is not None
    assert rep.max_ratio == 1.0
    assert "FAIL" in str(rep)


vectors = st.integers(1, 12).flatmap(
    lambda d: st.tuples(st.just(d), st.integers(1, d),
                        arrays(np.float64, d, elements=st.floats(-1e6, 1e6, allow_nan=False))))


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_per_call_contraction_support_and_idempotence(case):
    d, k, s = case
    c = C.top_k(k, d)
    out = C.compress(c, s)
    r = out - s
    assert r @ r <= (1 - k / d) * (s @ s) * (1 + 1e-12) + 1e-300
    assert np.count_nonzero(out) <= k
    np.testing.assert_array_equal(C.compress(c, out), out)


def test_enumeration_oracle_small_dims(rng):
    # top-k residual is the minimum over all k-subsets
    for _ in range(50):
        d = int(rng.integers(2, 6))
        k = int(rng.integers(1, d + 1))
        s = rng.standard_normal(d)
        best = min(sum(s[j] ** 2 for j in range(d) if j not in keep)
                   for keep in itertools.combinations(range(d), k))
        r = C.compress(C.top_k(k, d), s) - s
        assert np.isclose(r @ r, best, rtol=0, atol=1e-15)
