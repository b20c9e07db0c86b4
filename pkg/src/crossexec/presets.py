"""Built-in example instances used by the CLI, the figure data, and tests."""

from __future__ import annotations

import numpy as np

from .model import MarketSpec, frame_from_matrix

FIG_IDS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8")
EXAMPLE_IDS = FIG_IDS + ("asym", "blowup")

FIG8_SEED = 20240605

# Cross-resilience deviation demo (after a single block trade at time 0)
RESILIENCE_RHO = np.array([[2.0, 1.0], [1.0, 2.0]])
RESILIENCE_T1 = 5.0


def ow_spec(
    gamma: np.ndarray,
    rho: np.ndarray,
    horizon: float,
    x0,
    d0=None,
    grid_steps: int = 1000,
) -> MarketSpec:
    """Constant-impact, constant-resilience instance with zero targets and risk."""
    gamma = np.asarray(gamma, dtype=float)
    o, lam0 = frame_from_matrix(gamma)
    n = gamma.shape[0]
    d0 = np.zeros(n) if d0 is None else np.asarray(d0, dtype=float)
    return MarketSpec(
        n=n,
        m=1,
        T=horizon,
        O=o,
        lambda0=lam0,
        mu=np.zeros(n),
        sigma=np.zeros((n, 1)),
        rho=np.asarray(rho, dtype=float),
        Xi=np.zeros((n, n)),
        xi=np.zeros(n),
        zeta=np.zeros(n),
        x0=np.asarray(x0, dtype=float),
        d0=d0,
        grid_steps=grid_steps,
    )


def conley_pass_spec(grid_steps: int = 1000) -> MarketSpec:
    """gamma = [[2,1],[1,1]], rho = [[3,2],[2,5]]: kappa PD via the ratio criterion."""
    return ow_spec(
        gamma=[[2.0, 1.0], [1.0, 1.0]],
        rho=[[3.0, 2.0], [2.0, 5.0]],
        horizon=1.0,
        x0=[1.0, -2.0],
        grid_steps=grid_steps,
    )


def blowup_spec(grid_steps: int = 200) -> MarketSpec:
    """gamma, rho both PD but kappa indefinite: no optimal strategy exists."""
    return ow_spec(
        gamma=[[2.0, 1.0], [1.0, 1.0]],
        rho=[[1.0, 2.0], [2.0, 5.0]],
        horizon=0.2,
        x0=[0.0, 0.0],
        grid_steps=grid_steps,
    )


def crossing_zero_spec(rho3: float = -1.0, grid_steps: int = 1000) -> MarketSpec:
    """Identity impact, symmetric coupled resilience, x = (100, 0): fig3 instance."""
    return ow_spec(
        gamma=np.eye(2),
        rho=[[2.0, rho3], [rho3, 2.0]],
        horizon=1.0,
        x0=[100.0, 0.0],
        grid_steps=grid_steps,
    )


def risk_spec(
    x0=(100.0, 0.0),
    xi=None,
    zeta=None,
    grid_steps: int = 1000,
) -> MarketSpec:
    """Identity impact, rho = 3I, coupled risk matrix: fig4/fig5 instance."""
    n = 2
    return MarketSpec(
        n=n,
        m=1,
        T=1.0,
        O=np.eye(n),
        lambda0=np.ones(n),
        mu=np.zeros(n),
        sigma=np.zeros((n, 1)),
        rho=3.0 * np.eye(n),
        Xi=np.array([[1.0, 0.5], [0.5, 1.0]]),
        xi=np.zeros(n) if xi is None else np.asarray(xi, dtype=float),
        zeta=np.zeros(n) if zeta is None else zeta,
        x0=np.asarray(x0, dtype=float),
        d0=np.zeros(n),
        grid_steps=grid_steps,
    )


IMPACT_FRAME = np.array([[3.0, 4.0], [-4.0, 3.0]]) / 5.0


def impact_spec(sigma_vec=None, grid_steps: int = 1000) -> MarketSpec:
    """Rotated-frame growing impact, rho = I: fig6/fig7 (sigma=0) and fig8 (sigma=(1,1))."""
    n = 2
    o = IMPACT_FRAME
    sig = np.zeros((n, 1)) if sigma_vec is None else np.asarray(sigma_vec, dtype=float).reshape(n, 1)
    return MarketSpec(
        n=n,
        m=1,
        T=1.0,
        O=o,
        lambda0=np.ones(n),
        mu=np.array([3.0, 1.0]),
        sigma=sig,
        rho=o.T @ np.diag([1.0, 1.0]) @ o,
        Xi=np.zeros((n, n)),
        xi=np.zeros(n),
        zeta=np.zeros(n),
        x0=np.array([100.0, 0.0]),
        d0=np.zeros(n),
        grid_steps=grid_steps,
    )


def simple_resilience_spec(
    gamma=((2.0, 1.0), (1.0, 1.0)),
    rho_tilde: float = 2.0,
    horizon: float = 1.0,
    x0=(100.0, -30.0),
    grid_steps: int = 2000,
) -> MarketSpec:
    """rho = rho~ I with general SPD gamma: closed-form costs x^T gamma x/(2+T rho~)."""
    gamma = np.asarray(gamma, dtype=float)
    return ow_spec(gamma, rho_tilde * np.eye(gamma.shape[0]), horizon, x0, grid_steps=grid_steps)
