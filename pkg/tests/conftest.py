import numpy as np
import pytest

from sirkit import GaussianState, linear_model


def _random_spd(rng, n, jitter=0.5):
    A = rng.standard_normal((n, n))
    return A @ A.T + jitter * np.eye(n)


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_spd():
    return _random_spd


@pytest.fixture
def random_linear_system():
    """Factory for a random stable linear-Gaussian model with an initial state."""

    def make(seed=0, n_x=4, n_z=2):
        rng = np.random.default_rng(seed)
        F = np.eye(n_x) + 0.1 * rng.standard_normal((n_x, n_x))
        H = rng.standard_normal((n_z, n_x))
        Q = 0.1 * _random_spd(rng, n_x, 0.1)
        R = 0.5 * _random_spd(rng, n_z, 0.5)
        model = linear_model(F, H, Q, R)
        x0 = GaussianState(rng.standard_normal(n_x), _random_spd(rng, n_x, 1.0))
        Z = rng.standard_normal((20, n_z))
        return model, x0, Z

    return make
