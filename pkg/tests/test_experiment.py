import numpy as np
import pytest

from compoda import experiment
from compoda.algorithms import StepsizeSchedule
from compoda.config import ConfigError

from conftest import small_softmax_cfg


def test_analytic_optimum_for_replicated_recentred_softmax():
    setup = experiment.build(small_softmax_cfg(problem={"split": "replicate"}))
    assert setup.info["analytic_zero_stationary"]
    np.testing.assert_array_equal(setup.x_ref, np.zeros(50))
    assert setup.F_star == pytest.approx(setup.objective(np.zeros(50)), abs=0)
    assert setup.R0 == pytest.approx(0.1 * np.sqrt(50))


def test_reference_solve_used_for_row_split():
    setup = experiment.build(small_softmax_cfg(composite={"kind": "l1", "lambda": 0.01}))
    assert not setup.info["analytic_zero_stationary"]
    # no point we can reach should beat the reference optimum
    trace = experiment.run_setup(setup, T=300)
    assert min(r.F_real for r in trace.records) >= -1e-9
    assert setup.F0 > 0


def test_smoothness_defaults_and_certificate():
    setup = experiment.build(small_softmax_cfg())
    assert 0 < setup.L <= setup.ell
    assert setup.L_cert >= setup.L / 1.5
    pinned = experiment.build(small_softmax_cfg(problem={"L": 2.0, "ell": 3.0}))
    assert (pinned.L, pinned.ell) == (2.0, 3.0)


def test_m_defaults_to_inverse_delta():
    assert experiment.build(small_softmax_cfg()).m == pytest.approx(5.0)
    raw = small_softmax_cfg()
    raw["m"] = 7.0
    assert experiment.build(raw).m == 7.0


def test_stepsize_mapping():
    setup = experiment.build(small_softmax_cfg(algorithm={"stepsize": {"inv_gamma": 0.01}}))
    step = experiment.stepsize_for(setup)
    assert isinstance(step, StepsizeSchedule) and step(0) == pytest.approx(100.0)
    assert experiment.stepsize_for(setup, value=0.5)(3) == pytest.approx(2.0)
    base = experiment.build(small_softmax_cfg(algorithm={"kind": "prox_ef", "stepsize": {"gamma": 50.0}}))
    assert experiment.stepsize_for(base) == pytest.approx(0.02)
    assert experiment.stepsize_for(base, value=0.1) == 0.1
    grid = experiment.build(small_softmax_cfg(algorithm={"stepsize": {"grid": [0.1]}}))
    with pytest.raises(ConfigError, match="sweep"):
        experiment.stepsize_for(grid)


def test_runs_are_reproducible():
    cfg = small_softmax_cfg(noise={"sigma": 5.0})
    _, a = experiment.run_config(cfg)
    _, b = experiment.run_config(cfg)
    assert [r.F_real for r in a.records] == [r.F_real for r in b.records]
    _, c = experiment.run_config(cfg, seed=1)
    assert a.records[-1].F_real != c.records[-1].F_real


def test_sweep_width_does_not_change_results():
    setup = experiment.build(small_softmax_cfg(noise={"sigma": 5.0}))
    grid = [0.1, 0.01, 0.001]
    serial, best1 = experiment.sweep(setup, grid, width=1)
    parallel, best2 = experiment.sweep(setup, grid, width=3)
    assert best1 == best2
    for (v1, t1), (v2, t2) in zip(serial, parallel):
        assert v1 == v2
        assert [r.F_real for r in t1.records] == [r.F_real for r in t2.records]


def test_sweep_width_env():
    assert experiment.sweep_width({}) == 1
    assert experiment.sweep_width({"COMPODA_THREADS": "4"}) == 4
    for bad in ("0", "x"):
        with pytest.raises(ConfigError):
            experiment.sweep_width({"COMPODA_THREADS": bad})


def test_logistic_one_vs_rest(tmp_path):
    cfg = small_softmax_cfg(problem={"type": "logistic", "N": 300, "d": 5, "classes": 3,
                                     "positive_class": 2, "normalize": True},
                            clients={"n": 3, "frac_random": 0.0})
    setup = experiment.build(cfg)
    assert setup.oracle.n == 3 and setup.oracle.d == 5
    assert sum(setup.info["sizes"]) == 300
    np.testing.assert_array_equal(setup.x0, np.zeros(5))
