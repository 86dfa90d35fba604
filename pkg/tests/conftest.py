"""Shared fixtures: bundled example system/scheme, a fitted refresh
polynomial, and a random plant/controller generator used by the lifting
tests."""

import numpy as np
import pytest

from bootctrl.bootpoly import BootstrapSpec, fit
from bootctrl.fixtures import REFERENCE_SECTOR_SLOPE, demo_scheme, demo_system
from bootctrl.statespace import Controller, Plant


@pytest.fixture(scope="session")
def demo_pair():
    return demo_system()


@pytest.fixture(scope="session")
def plant(demo_pair):
    return demo_pair[0]


@pytest.fixture(scope="session")
def controller(demo_pair):
    return demo_pair[1]


@pytest.fixture(scope="session")
def scheme():
    return demo_scheme()


@pytest.fixture(scope="session")
def fitted_poly():
    """Degree-25 fit with two wrap intervals at unit modulus (slope ~0.0915)."""
    return fit(BootstrapSpec(q=1.0, epsilon=0.5, K=2, d=25))


@pytest.fixture(scope="session")
def reference_slope():
    return REFERENCE_SECTOR_SLOPE


def _spectral_rescale(M, target):
    radius = max(abs(np.linalg.eigvals(M)))
    if radius > 0:
        M = M * (target / radius)
    return M


@pytest.fixture(scope="session")
def make_random_system():
    """Factory for random plant/controller pairs with modest dynamics.

    The individual state matrices are rescaled to spectral radius ~0.8 so
    trajectories over a few tens of steps stay well inside double
    precision; the closed loop itself need not be stable for the exact
    algebraic identities under test.
    """

    def make(rng, n=None, nc=None, m_u=None, p_y=None, m_w1=None, m_w2=None,
             p_z=None):
        n = int(rng.integers(1, 4)) if n is None else n
        nc = int(rng.integers(1, 4)) if nc is None else nc
        m_u = int(rng.integers(1, 3)) if m_u is None else m_u
        p_y = int(rng.integers(1, 3)) if p_y is None else p_y
        m_w1 = int(rng.integers(1, 3)) if m_w1 is None else m_w1
        m_w2 = int(rng.integers(1, 3)) if m_w2 is None else m_w2
        p_z = int(rng.integers(1, 3)) if p_z is None else p_z
        scale = 0.5
        plant = Plant(
            A=_spectral_rescale(rng.standard_normal((n, n)), 0.8),
            B=scale * rng.standard_normal((n, m_u)),
            B1=scale * rng.standard_normal((n, m_w1)),
            C=scale * rng.standard_normal((p_y, n)),
            F1=scale * rng.standard_normal((p_y, m_w1)),
            C1=scale * rng.standard_normal((p_z, n)),
            E=scale * rng.standard_normal((p_z, m_u)),
            D1=scale * rng.standard_normal((p_z, m_w1)),
        )
        controller = Controller(
            Ac=_spectral_rescale(rng.standard_normal((nc, nc)), 0.8),
            Bc=scale * rng.standard_normal((nc, p_y)),
            B2=scale * rng.standard_normal((nc, m_w2)),
            Cc=scale * rng.standard_normal((m_u, nc)),
            Dc=scale * rng.standard_normal((m_u, p_y)),
            F2=scale * rng.standard_normal((m_u, m_w2)),
        )
        return plant, controller

    return make
