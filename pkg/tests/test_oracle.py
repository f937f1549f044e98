import numpy as np
import pytest

from src.adversarial import coverage_zeta, lower_bound_instance
from src.errors import BudgetExceeded
from src.metrics import EstimatorKind, EstimatorSpec, ZetaPolicy, monte_carlo_bias_variance
from src.oracle import (COVERAGE_EVENT, EnumerationBudget, enumerate_expectation_beta,
                        enumerate_expectation_projection, _row_weights)
from src.sketching import Family, SketchFamily, attach_debias_weights, build_distribution, draw_sample

SMALL_X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0], [2.0, 1.0]])
SMALL_Y = np.array([[0.3], [-1.2], [2.0], [0.5], [-0.7]])


def test_sample_mean_is_unbiased():
    X = np.ones((3, 1))
    y = np.array([[1.0], [2.0], [6.0]])
    exact = enumerate_expectation_beta(X, y, build_distribution(X, "uniform"), 3)
    assert exact.total_weight == pytest.approx(1.0)
    assert exact.exact_bias == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(exact.E_beta, [[3.0]])
    # n * population variance of y / m
    assert exact.exact_variance == pytest.approx(3 * np.var(y) / 3)

    spec = EstimatorSpec(EstimatorKind.OLS_SUBSAMPLED, SketchFamily(Family.UNIFORM), X, 3, y=y)
    stats = monte_carlo_bias_variance(spec, 2000, ZetaPolicy.disabled(), base_seed=0, bootstrap=20)
    assert stats.bias <= 10 * stats.variance / 2000


def test_monte_carlo_agrees_with_enumeration():
    plan = build_distribution(SMALL_X, "row_norm")
    exact = enumerate_expectation_beta(SMALL_X, SMALL_Y, plan, 4)
    spec = EstimatorSpec(EstimatorKind.OLS_SUBSAMPLED, SketchFamily(Family.ROWNORM), SMALL_X, 4, y=SMALL_Y)
    trials = 4000
    stats = monte_carlo_bias_variance(spec, trials, ZetaPolicy.disabled(), base_seed=8, bootstrap=100)
    assert abs(stats.variance - exact.exact_variance) <= 4 * stats.variance_stderr
    assert abs(stats.bias - exact.exact_bias) <= 4 * stats.bias_stderr + stats.variance / trials


def test_debiased_enumeration_changes_the_weights():
    X = np.repeat(SMALL_X, 2, axis=0)
    y = np.repeat(SMALL_Y, 2, axis=0)
    plan = build_distribution(X, "uniform")
    classical = enumerate_expectation_beta(X, y, plan, 5)
    debiased = enumerate_expectation_beta(X, y, plan, 5, debiased=True)
    assert classical.total_weight == pytest.approx(1.0)
    assert not np.allclose(classical.E_beta, debiased.E_beta)
    assert debiased.exact_bias <= debiased.exact_variance


def test_budget_is_enforced():
    plan = build_distribution(SMALL_X, "uniform")
    with pytest.raises(BudgetExceeded):
        enumerate_expectation_beta(SMALL_X, SMALL_Y, plan, 4, budget=EnumerationBudget(max_tuples=100))


def test_coverage_conditioned_sign_pattern():
    inst = lower_bound_instance(1)
    exact = enumerate_expectation_beta(inst.X, inst.y, inst.plan, 6, event=COVERAGE_EVENT)
    assert 0.0 < exact.total_weight < 1.0
    gap = (exact.E_beta - inst.beta_star).ravel()
    # Columns fed by (-1, +1) responses are pulled down, columns fed by (+1, +1) pushed up.
    assert np.all(gap[:2] < 0)
    assert np.all(gap[2:] > 0)


def test_projection_enumeration_for_constant_column():
    X = np.ones((4, 1))
    moments = enumerate_expectation_projection(X, build_distribution(X, "uniform"), 2)
    assert moments.total_weight == pytest.approx(1.0)
    np.testing.assert_allclose(moments.E_P, np.full((4, 4), 0.25), atol=1e-12)
    assert moments.bias_F2 == pytest.approx(0.0, abs=1e-12)
    assert moments.second_moment == pytest.approx(3 / 2)


@pytest.mark.parametrize("kind", ["uniform", "exact_leverage", "row_norm"])
def test_enumeration_weights_match_drawn_debias_weights(kind, rng):
    X = np.repeat(SMALL_X, 2, axis=0)
    plan = build_distribution(X, kind)
    sample = attach_debias_weights(draw_sample(plan, 5, rng), plan, 5)
    weights = _row_weights(plan, 5, debiased=True)
    np.testing.assert_allclose(weights[sample.indices], sample.weights(debiased=True), rtol=1e-12)
    np.testing.assert_allclose(_row_weights(plan, 5, debiased=False)[sample.indices], sample.base_weights,
                               rtol=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("conditioned", [False, True])
def test_monte_carlo_agrees_with_enumeration_on_hard_instance(conditioned):
    inst = lower_bound_instance(1)
    m, trials = 6, 20000
    exact = enumerate_expectation_beta(inst.X, inst.y, inst.plan, m,
                                       event=COVERAGE_EVENT if conditioned else None)
    zeta = coverage_zeta() if conditioned else ZetaPolicy.disabled()
    spec = EstimatorSpec(EstimatorKind.OLS_SUBSAMPLED, inst.sketch_family(), inst.X, m, y=inst.y)
    stats = monte_carlo_bias_variance(spec, trials, zeta, base_seed=17, threads=2, bootstrap=100)

    if conditioned:
        assert stats.rejection_rate == pytest.approx(1.0 - exact.total_weight, abs=0.02)
    assert abs(stats.bias - exact.exact_bias) <= 4 * stats.bias_stderr + stats.variance / stats.accepted
    assert abs(stats.variance - exact.exact_variance) <= 4 * stats.variance_stderr
