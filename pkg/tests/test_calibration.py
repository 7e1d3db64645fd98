import itertools

import numpy as np
import pytest

from groomsim.calibration import (
    CalibrationTarget,
    SweepSettings,
    calibrate,
    derive_seed,
    objective,
    objective_se,
    sweep_alpha,
)
from groomsim.model import run_simulation
from groomsim.presets import get_preset
from groomsim.stats import fit_nm_arrays

# short-period settings (the 755 group chat budget) keep each objective call cheap
T, R0 = 120, 0.258


def target_from_run(alpha, beta, seed, replicates=2, groomers=200):
    """Regression line of simulations at (alpha, beta) on the same replicate seeds."""
    base = CalibrationTarget(a=1.0, b=1.0, u_fixed=T, steps=T, r0=R0, groomers=groomers,
                             replicates=replicates, seed=seed)
    runs = [run_simulation(base.sim_config(alpha, beta, s)).nmu() for s in base.replicate_seeds()]
    reg = fit_nm_arrays(*(np.concatenate(col) for col in zip(*runs)))
    return CalibrationTarget(a=reg.a, b=reg.b, u_fixed=T, steps=T, r0=R0, groomers=groomers,
                             replicates=replicates, seed=seed)


@pytest.fixture(scope="module")
def target():
    return target_from_run(1.0, 0.3, seed=1)


@pytest.fixture(scope="module")
def null_target():
    return target_from_run(0.0, 0.3, seed=1)


def test_seed_derivation_depends_only_on_key():
    assert derive_seed(5, 0) == derive_seed(5, 0)
    assert len({derive_seed(5, r) for r in range(20)}) == 20
    assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)


def test_objective_deterministic(target):
    assert objective(0.8, 0.25, target) == objective(0.8, 0.25, target)


def test_objective_parallel_matches_serial(target):
    assert objective(0.8, 0.25, target, threads=3) == objective(0.8, 0.25, target)


@pytest.mark.parametrize("step", [0.1, 0.2])
def test_objective_minimal_at_truth(target, step):
    here = objective(1.0, 0.3, target)
    for i, j in itertools.product(range(-2, 3), repeat=2):
        if (i, j) != (0, 0):
            assert here <= objective(1.0 * (1 + i * step), 0.3 * (1 + j * step), target)


def test_null_target_prefers_null_model(null_target):
    assert null_target.a == pytest.approx(1.0, abs=1e-9)
    assert objective(0.0, 0.3, null_target) < objective(2.0, 0.3, null_target)


def test_replicates_within_monte_carlo_error(target):
    doubled = CalibrationTarget(**{**target.__dict__, "replicates": 4})
    diff = abs(objective(1.0, 0.3, doubled) - objective(1.0, 0.3, target))
    assert diff < objective_se(1.0, 0.3, target)


def test_objective_rejects_bad_parameters(target):
    with pytest.raises(ValueError):
        objective(-0.1, 0.3, target)
    with pytest.raises(ValueError):
        objective(1.0, 0.0, target)


def test_target_validation():
    with pytest.raises(ValueError):
        CalibrationTarget(a=1, b=1, u_fixed=0, steps=5, r0=0.1)
    with pytest.raises(ValueError):
        CalibrationTarget(a=1, b=1, u_fixed=5, steps=5, r0=0.1, replicates=0)


def test_calibrate_self_recovery(target):
    res = calibrate(target)
    assert res.alpha_hat == pytest.approx(1.0, rel=0.2)
    assert res.beta_hat == pytest.approx(0.3, rel=0.2)
    assert res.converged
    assert res.objective == min(v for _, _, v, _ in res.trace)
    grid_best = min(v for _, _, v, phase in res.trace if phase == "grid")
    assert res.objective <= grid_best
    assert res.evaluations == len(res.trace) <= 64 + 200


def test_calibrate_null_identification(null_target):
    res = calibrate(null_target)
    assert res.alpha_hat < 0.1


def test_calibrate_budget_one_returns_grid_best(target):
    res = calibrate(target, budget=1)
    assert not res.converged
    assert {phase for *_, phase in res.trace} == {"grid"}
    assert res.objective == min(v for _, _, v, _ in res.trace)


def test_calibrate_budget_exhaustion(target):
    res = calibrate(target, budget=5)
    assert not res.converged
    assert sum(phase == "nelder-mead" for *_, phase in res.trace) == 5


def test_calibrate_deterministic(target):
    a, b = calibrate(target, budget=20), calibrate(target, budget=20, threads=2)
    assert (a.alpha_hat, a.beta_hat, a.objective) == (b.alpha_hat, b.beta_hat, b.objective)
    assert a.trace == b.trace


# -- sweeps ------------------------------------------------------------------

SMALL = SweepSettings(beta=0.24, r0=0.126, steps=300, groomers=100, replicates=4, seed=3, plexp_xmin=5)


def test_sweep_single_alpha():
    rows = sweep_alpha([0.5], SMALL)
    assert len(rows) == 1 and rows[0].alpha == 0.5
    assert len(rows[0].a_values) == SMALL.replicates


def test_sweep_null_row():
    (row,) = sweep_alpha([0.0], SMALL)
    assert row.a_mean == pytest.approx(1.0, abs=0.01)


def test_sweep_independent_of_evaluation_order():
    serial = sweep_alpha([0.0, 1.0, 3.0], SMALL)
    threaded = sweep_alpha([0.0, 1.0, 3.0], SMALL, threads=3)
    assert serial == threaded


def test_sweep_replicate_consistency():
    settings10 = SweepSettings(beta=0.24, r0=0.126, steps=998, replicates=10, seed=8)
    settings20 = SweepSettings(beta=0.24, r0=0.126, steps=998, replicates=20, seed=8)
    (r10,) = sweep_alpha([1.34], settings10)
    (r20,) = sweep_alpha([1.34], settings20)
    assert abs(r10.a_mean - r20.a_mean) <= 2 * r10.a_sd / np.sqrt(10)


def test_sweep_a_increases_with_alpha():
    rows = sweep_alpha([0.0, 1.0, 4.0], SMALL)
    a = [r.a_mean for r in rows]
    assert a[0] < a[1] < a[2]


# -- published Twitter line --------------------------------------------------

@pytest.fixture(scope="module")
def twitter_fit():
    p = get_preset("twitter")
    target = CalibrationTarget(a=p.a, b=p.b, u_fixed=136, steps=p.steps, r0=p.r0)
    return target, calibrate(target)


@pytest.mark.slow
def test_twitter_search_leaves_the_alpha_bound(twitter_fit):
    # the best grid cell sits on alpha = 8; the refinement must walk back into the box
    target, res = twitter_fit
    assert res.converged
    assert res.alpha_hat < 8.0
    assert res.objective <= objective(2.0, 0.20, target)


@pytest.mark.slow
@pytest.mark.xfail(reason="the simulated slope at alpha=1.34 is about 1.135, so matching a=1.19 "
                          "needs alpha near 2.1, just past the +-50% band", strict=False)
def test_twitter_reference_vicinity(twitter_fit):
    _, res = twitter_fit
    assert res.alpha_hat == pytest.approx(1.34, rel=0.5)
    assert res.beta_hat == pytest.approx(0.24, rel=0.5)
