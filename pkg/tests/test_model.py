import math

import numpy as np
import pytest

from byzsim.data import Dataset
from byzsim.errors import DimensionError
from byzsim.model import (
    LogRegProblem, batch_grad, full_grad, lipschitz_bound, loss, stoch_grad, stoch_grad_pair,
)
from byzsim.verify import finite_difference_grad, naive_loss

pytestmark = pytest.mark.usefixtures("backend")


def test_loss_at_zero_is_log2(small_data):
    p = LogRegProblem(small_data, 0.0)
    assert loss(p, np.zeros(small_data.d)) == pytest.approx(math.log(2), abs=1e-12)


def test_loss_saturates_to_regularizer():
    p = LogRegProblem(Dataset(np.array([[1.0]]), np.array([1.0])), 0.01)
    t = 60.0
    assert loss(p, [t]) == pytest.approx(2 * 0.01 * t * t / 2, rel=1e-12)


def test_loss_matches_naive(small_data, rng):
    p = LogRegProblem(small_data, 0.05)
    for _ in range(5):
        x = rng.standard_normal(small_data.d)
        want = naive_loss(small_data.features, small_data.labels, x, 0.05)
        assert abs(loss(p, x) - want) <= 1e-12


def test_stoch_grad_at_zero():
    p = LogRegProblem(Dataset(np.array([[2.0, 0.0]]), np.array([1.0])), 0.0)
    assert np.array_equal(stoch_grad(p, [0.0, 0.0], 0), [-1.0, 0.0])


def test_stoch_grad_regularizer_only():
    p = LogRegProblem(Dataset(np.zeros((1, 3)), np.array([1.0])), 0.3)
    x = np.array([1.0, -2.0, 0.5])
    assert np.allclose(stoch_grad(p, x, 0), 0.6 * x, rtol=0, atol=1e-15)


def test_stoch_grad_finite_differences(small_data, rng):
    p = LogRegProblem(small_data, 0.01)
    for _ in range(20):
        x = rng.standard_normal(small_data.d)
        j = int(rng.integers(small_data.m))
        fd = finite_difference_grad(
            lambda y: naive_loss(small_data.features[j:j + 1], small_data.labels[j:j + 1], y, 0.01), x
        )
        g = stoch_grad(p, x, j)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_full_grad_is_mean_of_stoch(small_data, rng):
    p = LogRegProblem.default(small_data)
    x = rng.standard_normal(small_data.d)
    mean = np.mean([stoch_grad(p, x, j) for j in range(small_data.m)], axis=0)
    assert np.max(np.abs(mean - full_grad(p, x))) <= 1e-12
    assert np.max(np.abs(batch_grad(p, x, np.arange(small_data.m)) - full_grad(p, x))) <= 1e-12


def test_full_grad_single_sample_at_zero():
    a = np.array([[0.5, -1.5]])
    p = LogRegProblem(Dataset(a, np.array([-1.0])), 0.0)
    assert np.allclose(full_grad(p, [0.0, 0.0]), -(-1.0) * a[0] / 2, atol=1e-16)


def test_identical_samples_full_equals_stoch(rng):
    a = rng.standard_normal(4)
    p = LogRegProblem(Dataset(np.tile(a, (6, 1)), np.ones(6)), 0.1)
    x = rng.standard_normal(4)
    assert np.allclose(full_grad(p, x), stoch_grad(p, x, 3), atol=1e-15)


def test_pair(small_data, rng):
    p = LogRegProblem(small_data, 0.02)
    x = rng.standard_normal(small_data.d)
    a, b = stoch_grad_pair(p, x, x, 5)
    assert np.array_equal(a, b)
    y = rng.standard_normal(small_data.d)
    ga, gb = stoch_grad_pair(p, x, y, 7)
    assert np.array_equal(ga, stoch_grad(p, x, 7)) and np.array_equal(gb, stoch_grad(p, y, 7))


def test_pair_lipschitz(small_data, rng):
    p = LogRegProblem(small_data, 0.02)
    L = lipschitz_bound(p)
    for _ in range(50):
        x, y = rng.standard_normal((2, small_data.d))
        j = int(rng.integers(small_data.m))
        ga, gb = stoch_grad_pair(p, x, y, j)
        assert np.linalg.norm(ga - gb) <= L * np.linalg.norm(x - y) * (1 + 1e-12)


def test_errors(small_data):
    p = LogRegProblem(small_data, 0.0)
    with pytest.raises(DimensionError):
        stoch_grad(p, np.zeros(small_data.d + 1), 0)
    with pytest.raises(IndexError):
        stoch_grad(p, np.zeros(small_data.d), small_data.m)
    with pytest.raises(ValueError):
        LogRegProblem(small_data, -1.0)
