import numpy as np
import pytest

from nmq import channels
from nmq.dynamics import RateFunction, dephasing_family

TWO_PI = 2 * np.pi


def random_cptp(d, rng, n_kraus=None):
    """CPTP map from a random isometry (Kraus operators stacked into a Stiefel matrix)."""
    n_kraus = n_kraus or d * d
    Z = rng.normal(size=(n_kraus * d, d)) + 1j * rng.normal(size=(n_kraus * d, d))
    Q, R = np.linalg.qr(Z)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    return channels.kraus_to_superop([Q[k * d:(k + 1) * d] for k in range(n_kraus)])


def random_hermitian(n, rng):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return A + A.conj().T


def fibonacci_sphere(n):
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = np.pi * (1 + 5 ** 0.5) * k
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)



@pytest.fixture(scope="session")
def sin_family():
    ts = np.linspace(0.0, TWO_PI, 513)
    return dephasing_family(RateFunction.sine(), 0.0, ts)


@pytest.fixture(scope="session")
def sin_R(sin_family):
    ts = sin_family.times
    return np.exp(-2 * (1 - np.cos(ts)))
