import numpy as np
import pytest

from dwsim import model


@pytest.fixture(scope="session")
def pendulum():
    plant, gains = model.pendulum_preset()
    return plant, gains


def random_stable(rng, n, rho_target):
    """Random matrix rescaled to the requested spectral radius."""
    m = rng.standard_normal((n, n))
    rho = max(abs(np.linalg.eigvals(m)))
    return m * (rho_target / rho)


def random_psd(rng, n):
    m = rng.standard_normal((n, n))
    return m @ m.T
