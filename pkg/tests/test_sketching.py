import numpy as np
import pytest
from scipy.linalg import hadamard

from src.errors import AllZeroRows, DebiasUndefined, InvalidSparsity, NotPowerOfTwo, ShapeMismatch
from src.matcore import leverage_scores, thin_factorize
from src.sketching import (AliasTable, Family, GaussianSketch, PlanKind, RowSamplingSketch, SketchFamily, attach_debias_weights,
                           build_distribution, check_debias_feasible, draw_sample, fwht_inplace, gaussian_operator,
                           next_power_of_two, plan_from_probabilities, sparse_sign_operator, srht_debias,
                           srht_operator, subspace_embedding_check)


def test_alias_table_frequencies(rng):
    weights = np.array([0.5, 0.0, 0.2, 0.3])
    draws = AliasTable(weights).draw(200_000, rng)
    freq = np.bincount(draws, minlength=4) / draws.size
    np.testing.assert_allclose(freq, weights, atol=0.005)
    assert freq[1] == 0.0


def test_alias_table_needs_positive_weight():
    with pytest.raises(ValueError):
        AliasTable(np.zeros(3))


@pytest.mark.parametrize("kind", [PlanKind.UNIFORM, PlanKind.ROW_NORM, PlanKind.EXACT_LEVERAGE])
def test_build_distribution_is_a_distribution(kind, spiked_problem):
    X, _ = spiked_problem
    plan = build_distribution(X, kind)
    assert plan.probabilities.sum() == pytest.approx(1.0)
    assert np.all(plan.probabilities >= 0)
    assert plan.rank == 4
    assert plan.theta_min <= 1.0 + 1e-12 <= plan.theta_max + 2e-12


def test_exact_leverage_plan_has_unit_theta(spiked_problem):
    X, _ = spiked_problem
    plan = build_distribution(X, "exact_leverage")
    assert plan.theta_min == pytest.approx(1.0)
    assert plan.theta_max == pytest.approx(1.0)
    np.testing.assert_allclose(plan.leverage_ratio(64), np.full(256, 4 / 64))


def test_shrinkage_mixes_leverage_and_uniform(spiked_problem):
    X, _ = spiked_problem
    lev = leverage_scores(X)
    plan = build_distribution(X, "shrinkage", lam=0.25)
    np.testing.assert_allclose(plan.probabilities, 0.25 * lev / 4 + 0.75 / 256)


def test_shrinkage_requires_lambda(spiked_problem):
    X, _ = spiked_problem
    with pytest.raises(ValueError):
        build_distribution(X, "shrinkage")
    with pytest.raises(ValueError):
        build_distribution(X, "uniform", lam=0.5)


def test_row_norm_plan_rejects_zero_matrix():
    with pytest.raises(AllZeroRows):
        build_distribution(np.zeros((5, 2)), "row_norm")


def test_leverage_ratio_on_blocked_rows():
    X = np.array([[1.0], [1.0], [0.0]])
    plan = plan_from_probabilities(X, [1.0, 0.0, 0.0])
    ratio = plan.leverage_ratio(2)
    assert ratio[0] == pytest.approx(0.25)
    assert np.isinf(ratio[1])
    assert ratio[2] == 0.0
    assert np.isinf(plan.theta_max)


def test_plan_from_probabilities_validates():
    X = np.eye(3)
    with pytest.raises(ValueError):
        plan_from_probabilities(X, [0.5, 0.5, 0.5])
    with pytest.raises(ShapeMismatch):
        plan_from_probabilities(X, [0.5, 0.5])


def test_row_sampling_expected_gram_is_identity(rng):
    X = np.eye(8)
    plan = build_distribution(rng.standard_normal((8, 3)), "uniform")
    total = np.zeros((8, 8))
    for _ in range(2000):
        sample = draw_sample(plan, 4, rng)
        S = RowSamplingSketch(input_dim=8, output_dim=4, sample=sample).apply(X)
        total += S.T @ S
    np.testing.assert_allclose(total / 2000, np.eye(8), atol=0.15)


def test_debias_weights_are_constant_for_exact_leverage(spiked_problem, rng):
    X, _ = spiked_problem
    plan = build_distribution(X, "exact_leverage")
    sample = attach_debias_weights(draw_sample(plan, 32, rng), plan, 32)
    np.testing.assert_allclose(sample.debias_weights, np.sqrt(32 / 28))


def test_debias_weights_follow_leverage_ratio(spiked_problem, rng):
    X, _ = spiked_problem
    plan = build_distribution(X, "uniform")
    sample = attach_debias_weights(draw_sample(plan, 128, rng), plan, 128)
    ratio = plan.leverage[sample.indices] / (128 / 256)
    np.testing.assert_allclose(sample.debias_weights, 1 / np.sqrt(1 - ratio))
    np.testing.assert_allclose(sample.weights(debiased=True), sample.base_weights * sample.debias_weights)


def test_debias_infeasible_for_small_m(spiked_problem):
    X, _ = spiked_problem
    plan = build_distribution(X, "uniform")
    with pytest.raises(DebiasUndefined):
        check_debias_feasible(plan, 4)


def test_debiased_sketch_requires_weights(spiked_problem, rng):
    X, _ = spiked_problem
    plan = build_distribution(X, "uniform")
    with pytest.raises(DebiasUndefined):
        RowSamplingSketch(input_dim=256, output_dim=8, sample=draw_sample(plan, 8, rng), debiased=True)


@pytest.mark.parametrize("n", [1, 2, 8, 64])
def test_fwht_matches_hadamard(n, rng):
    v = rng.standard_normal((n, 3))
    expected = hadamard(n) @ v
    np.testing.assert_allclose(fwht_inplace(v.copy()), expected, atol=1e-10)


def test_fwht_vector_in_place(rng):
    v = rng.standard_normal(16)
    expected = hadamard(16) @ v
    fwht_inplace(v)
    np.testing.assert_allclose(v, expected, atol=1e-10)


def test_fwht_rejects_non_power_of_two():
    with pytest.raises(NotPowerOfTwo):
        fwht_inplace(np.ones(6))


@pytest.mark.parametrize("n,expected", [(1, 1), (2, 2), (3, 4), (1000, 1024), (1024, 1024)])
def test_next_power_of_two(n, expected):
    assert next_power_of_two(n) == expected


def test_srht_matches_its_dense_form(rng):
    op = srht_operator(12, 5, rng)
    X = rng.standard_normal((12, 3))
    S = op.to_dense()
    assert S.shape == (5, 12)
    np.testing.assert_allclose(op.apply(X), S @ X, atol=1e-10)
    Z = rng.standard_normal((5, 2))
    np.testing.assert_allclose(op.apply_transpose(Z), S.T @ Z, atol=1e-10)


def test_srht_flattens_maximally_coherent_leverage(rng):
    X = np.eye(64)[:, :4]
    op = srht_operator(64, 16, rng)
    np.testing.assert_allclose(leverage_scores(op.mix(X)), np.full(64, 4 / 64), atol=1e-12)


@pytest.mark.slow
def test_srht_flattens_coherent_leverage(coherent_problem, rng):
    X, _ = coherent_problem
    assert leverage_scores(X)[:8].min() > 0.98
    worst = max(leverage_scores(srht_operator(1024, 256, rng).mix(X)).max() for _ in range(100))
    assert worst <= 3 * 8 / 1024


def test_dsrht_weights_use_mixed_leverage(rng):
    X = rng.standard_normal((100, 3))
    op = srht_operator(100, 64, rng)
    debiased = srht_debias(op, X)
    lev = leverage_scores(op.mix(X))[op.indices]
    np.testing.assert_allclose(debiased.debias_weights, 1 / np.sqrt(1 - lev * 128 / 64))
    assert debiased.descriptor == "dsrht"


def test_gaussian_expected_gram_is_identity(rng):
    total = np.zeros((8, 8))
    for _ in range(2000):
        S = gaussian_operator(8, 4, rng).to_dense()
        total += S.T @ S
    np.testing.assert_allclose(total / 2000, np.eye(8), atol=0.08)


def test_sparse_sign_structure_and_expected_gram(rng):
    op = sparse_sign_operator(8, 4, 2, rng)
    S = op.to_dense()
    assert np.all(np.count_nonzero(S, axis=1) == 2)
    np.testing.assert_allclose(op.apply_transpose(np.eye(4)), S.T, atol=1e-12)
    total = np.zeros((8, 8))
    for _ in range(2000):
        S = sparse_sign_operator(8, 4, 2, rng).to_dense()
        total += S.T @ S
    np.testing.assert_allclose(total / 2000, np.eye(8), atol=0.1)


def test_sparse_sign_rejects_bad_sparsity(rng):
    with pytest.raises(InvalidSparsity):
        sparse_sign_operator(8, 4, 9, rng)


def test_subspace_embedding_check_accepts_isometry(rng):
    X = rng.standard_normal((20, 3))
    identity = GaussianSketch(input_dim=20, output_dim=20, matrix=np.eye(20))
    assert subspace_embedding_check(thin_factorize(X), identity, 0.01)
    squash = GaussianSketch(input_dim=20, output_dim=20, matrix=0.1 * np.eye(20))
    assert not subspace_embedding_check(thin_factorize(X), squash, 0.5)


def test_sketch_family_dispatch(spiked_problem, rng):
    X, _ = spiked_problem
    lev = SketchFamily(Family.LEV)
    plan = lev.plan_for(X)
    op = lev.draw(256, 32, rng, plan)
    assert op.descriptor == "lev"
    assert lev.debias(op, X, plan).descriptor == "lev+debiased"
    assert SketchFamily(Family.GAUSSIAN).plan_for(X) is None
    assert SketchFamily(Family.SHRINKAGE, shrinkage=0.5).label == "shrinkage(0.5)"
    assert not SketchFamily(Family.SRHT).supports_debias
    with pytest.raises(DebiasUndefined):
        SketchFamily(Family.GAUSSIAN).debias(gaussian_operator(256, 8, rng), X, None)
