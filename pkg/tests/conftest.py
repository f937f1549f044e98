import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def gaussian_problem(rng):
    '''200 x 5 Gaussian design with a noisy linear response.'''
    X = rng.standard_normal((200, 5))
    y = X @ rng.standard_normal((5, 1)) + 0.5 * rng.standard_normal((200, 1))
    return X, y


@pytest.fixture
def spiked_problem(rng):
    '''256 x 4 Gaussian design whose first 8 rows are scaled by 3.'''
    X = rng.standard_normal((256, 4))
    X[:8] *= 3.0
    y = X @ np.ones((4, 1)) + rng.standard_normal((256, 1))
    return X, y


@pytest.fixture
def block_coherent_problem():
    '''64 x 4 design where column j lives on rows 16j..16j+15, so leverage is concentrated row by row.'''
    gen = np.random.default_rng(31)
    X = np.zeros((64, 4))
    for j in range(4):
        X[16 * j:16 * (j + 1), j] = gen.standard_normal(16)
    y = X @ gen.standard_normal((4, 1)) + gen.standard_normal((64, 1))
    return X, y


@pytest.fixture
def paired_bias_gap():
    '''Bias gap between two runs over the same accepted draws, with a paired bootstrap standard error.'''
    def gap(loss, classical, debiased, resamples=200, seed=0):
        assert classical.accepted == debiased.accepted
        count = classical.accepted
        gen = np.random.default_rng(seed)
        draws = np.empty(resamples)
        for b in range(resamples):
            idx = gen.integers(0, count, size=count)
            draws[b] = loss(classical.estimates[idx].mean(axis=0)) - loss(debiased.estimates[idx].mean(axis=0))
        return classical.bias - debiased.bias, float(np.std(draws, ddof=1))
    return gap


@pytest.fixture
def coherent_problem(rng):
    '''1024 x 8 Gaussian design topped with 8 scaled basis rows carrying almost all of the leverage.'''
    X = rng.standard_normal((1024, 8))
    X[:8] = 320.0 * np.eye(8)
    y = X @ rng.standard_normal((8, 1)) + rng.standard_normal((1024, 1))
    return X, y
