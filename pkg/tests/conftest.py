import numpy as np
import pytest

import crossexec as cx
from crossexec import presets


@pytest.fixture(scope="session")
def conley_spec():
    return presets.conley_pass_spec(grid_steps=200)


@pytest.fixture(scope="session")
def conley_coeffs(conley_spec):
    return cx.derive_coefficients(conley_spec)


@pytest.fixture(scope="session")
def ow_commuting_spec():
    # rho = 2I commutes with any gamma; closed forms available
    return presets.simple_resilience_spec(grid_steps=200)


@pytest.fixture(scope="session")
def risk_spec_small():
    return presets.risk_spec(x0=(1.0, 0.0), grid_steps=200)


def make_rho0_spec(grid_steps=100):
    """rho = 0 with positive drift so the convexity condition still holds."""
    gamma = np.array([[2.0, 1.0], [1.0, 1.0]])
    o, lam0 = cx.frame_from_matrix(gamma)
    return cx.MarketSpec(
        n=2, m=1, T=1.0, O=o, lambda0=lam0,
        mu=np.array([1.0, 1.0]), sigma=np.zeros((2, 1)),
        rho=np.zeros((2, 2)), Xi=np.zeros((2, 2)),
        xi=np.zeros(2), zeta=np.zeros(2),
        x0=np.array([7.0, -2.0]), d0=np.array([1.0, 0.5]),
        grid_steps=grid_steps,
    )
