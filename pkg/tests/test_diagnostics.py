import math

import numpy as np
import pytest

from compoda import algorithms as G
from compoda import composite as P
from compoda import diagnostics as D
from compoda.compressors import identity, top_k
from compoda.feedback import eta_default
from compoda.problems import gen_softmax, split_softmax_to_clients


@pytest.fixture(scope="module")
def oracle():
    return split_softmax_to_clients(gen_softmax(16, 64, 0.1, seed=2), 4, seed=2)


def test_within_tolerance_policy():
    assert D.within(1.0, 1.0)
    assert D.within(1.0 + 5e-10, 1.0)
    assert not D.within(1.0 + 2e-9, 1.0)
    assert D.within(1e-13, 0.0)
    assert not D.within(1e-11, 0.0)


def test_report_line():
    line = D.CheckReport("demo", False, 2.0, 1.0, -1.0, 3).line()
    assert line.startswith("FAIL demo:") and "worst_round=3" in line


def test_virtual_iterate_zero_case(rng):
    g, x0 = rng.standard_normal(3), rng.standard_normal(3)
    np.testing.assert_allclose(D.virtual_iterate(P.zero(), g, 2.0, 4.0, x0), x0 - g / 4.0)


def test_virtual_equals_real_for_exact_compressor(oracle):
    tr = G.run_econtrol_da(oracle, P.l1(0.05), identity(16), np.full(16, 0.1), 50, 40.0, debug=True)
    np.testing.assert_allclose(tr.debug["x_virtual"], tr.debug["x"], atol=1e-12)
    rep = D.check_virtual_real(tr)
    assert rep.passed and rep.lhs <= 1e-12 and rep.rhs <= 1e-12


@pytest.mark.parametrize("psi", [P.l1(0.05), P.zero(), P.ball(0.5)])
def test_virtual_real_holds(oracle, psi):
    tr = G.run_econtrol_da(oracle, psi, top_k(4, 16), np.full(16, 0.1), 120, 60.0, sigma=2.0, debug=True)
    rep = D.check_virtual_real(tr)
    assert rep.passed, rep.line()
    # the record-only fallback agrees
    tr.debug = None
    assert D.check_virtual_real(tr).passed


def test_econtrol_sums_pass_and_exact_limit(oracle):
    x0 = np.full(16, 0.1)
    tr = G.run_econtrol_da(oracle, P.l1(0.05), top_k(8, 16), x0, 300, 60.0, debug=True)
    reps = D.check_econtrol_sums(tr.debug["clients"], 0.5)
    assert len(reps) == 8 and all(r.passed for r in reps), [r.line() for r in reps]
    exact = G.run_econtrol_da(oracle, P.l1(0.05), identity(16), x0, 100, 60.0, debug=True)
    for r in D.check_econtrol_sums(exact.debug["clients"], 1.0):
        assert r.passed and r.lhs == 0.0 and r.rhs == 0.0


def test_econtrol_sums_weighted(oracle):
    sched = G.StepsizeSchedule("variable_theorem", G.StepsizeParams(ell=3, delta=0.25, sigma=1.0, n=4))
    tr = G.run_econtrol_da(oracle, P.zero(), top_k(4, 16), np.zeros(16), 150, sched, sigma=1.0, debug=True)
    reps = D.check_econtrol_sums(tr.debug["clients"], 0.25, weighted=True, gammas=tr.debug["gamma"])
    assert all(r.passed for r in reps), [r.line() for r in reps]
    assert all(r.name.startswith("weighted") for r in reps)


def test_corrupted_eta_is_reported_not_raised(oracle):
    delta = 0.25
    tr = G.run_econtrol_da(oracle, P.zero(), top_k(4, 16), np.zeros(16), 200, 60.0, sigma=1.0,
                           eta=min(1.0, 2 * eta_default(delta)), debug=True)
    reps = D.check_econtrol_sums(tr.debug["clients"], delta)
    assert all(isinstance(r.passed, bool) for r in reps)


def test_consecutive_distance(oracle):
    x0 = np.full(16, 0.1)
    L = oracle.smoothness_bound()
    tr = G.run_econtrol_da(oracle, P.l1(0.05), top_k(2, 16), x0, 300, 60.0, debug=True)
    rep = D.check_consecutive_distance(tr, L)
    assert rep.passed, rep.line()
    exact = G.run_econtrol_da(oracle, P.l1(0.05), identity(16), x0, 100, 60.0, debug=True)
    dbg = exact.debug
    np.testing.assert_allclose(dbg["g_hat"], dbg["grad"], atol=1e-12)
    rep = D.check_consecutive_distance(exact, L)
    r2 = np.sum(np.diff(dbg["x"], axis=0) ** 2, axis=1)
    assert math.isclose(rep.lhs, float(np.sum((2 * 60.0 - L) / 2 * r2)), rel_tol=1e-9, abs_tol=1e-15)
    assert rep.passed
    empty = G.run_econtrol_da(oracle, P.zero(), top_k(2, 16), x0, 0, 60.0, debug=True)
    rep = D.check_consecutive_distance(empty, L)
    assert rep.passed and rep.lhs == 0.0 and rep.rhs == 0.0


def test_consecutive_distance_needs_debug(oracle):
    tr = G.run_econtrol_da(oracle, P.zero(), top_k(2, 16), np.zeros(16), 5, 60.0)
    with pytest.raises(ValueError):
        D.check_consecutive_distance(tr, 1.0)


def test_comm_ledger():
    assert D.comm_ledger(100, 10, 3) == 130
    assert D.comm_ledger(0, 1, 0) == 0
    assert D.comm_ledger(5, 1 / 0.1, 1) == 15
    with pytest.raises(ValueError):
        D.comm_ledger(5, 0.5, 1)


def test_sampling_examples():
    rng = np.random.default_rng(0)
    rep = D.sampling_distribution_test(np.ones(3), 3, 100_000, rng)
    assert rep.passed
    one = D.sampling_distribution_test(np.ones(1), 1, 10_000, rng)
    assert one.passed and one.lhs == 0.0
    skew = D.sampling_distribution_test(np.array([1.0, 3.0]), 2, 100_000, rng)
    assert skew.passed
    np.testing.assert_allclose(D.sampling_probabilities([1.0, 3.0]), [0.25, 0.75])
    with pytest.raises(ValueError):
        D.sampling_distribution_test(np.ones(2), 3, 100, rng)


def test_sampling_detects_wrong_rule():
    # a sampler that always keeps the last index fails the test
    class Last:
        def random(self, size):
            return np.zeros(size)
    rep = D.sampling_distribution_test(np.ones(4), 4, 10_000, Last())
    assert not rep.passed


def test_trace_csv_roundtrip(oracle, tmp_path):
    tr = G.run_econtrol_da(oracle, P.l1(0.05), top_k(3, 16), np.full(16, 0.1), 25, 60.0, sigma=1.0, m=3.0)
    path = tmp_path / "trace.csv"
    D.write_trace_csv(tr, path)
    assert path.read_text().splitlines()[0] == ",".join(D.TRACE_COLUMNS)
    assert D.read_trace_csv(path) == tr.records
    base = G.run_prox_ef(oracle, P.l1(0.05), top_k(3, 16), np.full(16, 0.1), 5, 0.1)
    D.write_trace_csv(base, path)
    back = D.read_trace_csv(path)
    assert all(math.isnan(r.F_virtual) for r in back)


def test_trace_csv_bad_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b\n")
    with pytest.raises(ValueError):
        D.read_trace_csv(path)
