"""Assembly of the optimal state, strategy, deviation, and cost.

Zero-target mode uses the plain Riccati solution with feedback
X*(s) = gamma^{-1/2}(theta - I) H*(s); general targets go through the
cross-term-free transformation (F, Y-hat, psi, theta0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NumericDomainError, ShapeError
from .lindyn import DeviationPath, ExecutionPlan, HiddenState, deviation_of_plan
from .model import CoefficientSet, LambdaPath, MarketSpec, choose_F
from .riccati import (
    FeedbackGain,
    RiccatiSolution,
    TargetSolution,
    solve_riccati,
    solve_riccati_hat,
    solve_targets,
    theta,
    theta_hat,
)


@dataclass(frozen=True)
class OptimalSolution:
    """Optimal execution bundle: hidden state, plan, deviation, and analytic cost."""

    state: HiddenState
    plan: ExecutionPlan
    deviation: DeviationPath
    cost: float
    mode: str                       # "zero-target" | "general-target"
    riccati: RiccatiSolution
    gain: FeedbackGain
    targets: Optional[TargetSolution] = None


def _sigma_nonzero(coeffs: CoefficientSet) -> bool:
    return bool(np.any(coeffs.table.sigma != 0.0))


def _gamma_pow_nodes(spec: MarketSpec, coeffs: CoefficientSet,
                     lambda_path: Optional[LambdaPath], alpha: float) -> np.ndarray:
    if lambda_path is None:
        lam = coeffs.table.lam_det[::8]
    else:
        lam = np.stack([lambda_path.at(t) for t in spec.times])
    o = spec.O
    return np.einsum("ji,tj,jk->tik", o, lam ** alpha, o)


def _initial_state(spec: MarketSpec) -> np.ndarray:
    o = spec.O
    root = np.sqrt(spec.lambda0)
    g_half = o.T @ np.diag(root) @ o
    g_mhalf = o.T @ np.diag(1.0 / root) @ o
    return g_mhalf @ spec.d0 - g_half @ spec.x0


def optimal_state(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    gain: FeedbackGain,
    target_sol: Optional[TargetSolution] = None,
    f_path=None,
    w_path: Optional[np.ndarray] = None,
) -> HiddenState:
    """Integrate the closed-loop hidden state H* (RK4 for sigma=0, else Euler-Maruyama)."""
    n = spec.n
    n_steps = spec.grid_steps
    h0 = _initial_state(spec)
    general = target_sol is not None

    if _sigma_nonzero(coeffs):
        if w_path is None:
            raise ConfigurationError("sigma != 0: optimal_state needs Brownian increments w_path")
        w_path = np.asarray(w_path, dtype=float)
        if w_path.shape != (n_steps, spec.m):
            raise ShapeError(f"w_path must have shape ({n_steps}, {spec.m})")
        values = np.empty((n_steps + 1, n))
        values[0] = h0
        h = spec.dt
        eye = np.eye(n)
        for i in range(n_steps):
            j8, j4, j2 = 8 * i, 4 * i, 2 * i
            th = gain.values4[j4]
            if general:
                fb = f_path.dense[j8] + th
                aff = -coeffs.dense_B[j8] @ target_sol.theta0_2[j2]
                drift = (coeffs.dense_A[j8] + coeffs.dense_B[j8] @ fb) @ values[i] + aff
                loop_mat = eye - 2.0 * fb
                noise_aff = 2.0 * target_sol.theta0_2[j2]
            else:
                drift = (coeffs.dense_A[j8] + coeffs.dense_B[j8] @ th) @ values[i]
                loop_mat = eye - 2.0 * th
                noise_aff = None
            diff = np.zeros(n)
            for k in range(spec.m):
                c = coeffs.dense_Ck[k, j8]
                vec = c @ (loop_mat @ values[i])
                if noise_aff is not None:
                    vec = vec + c @ noise_aff
                diff += vec * w_path[i, k]
            values[i + 1] = values[i] + h * drift + diff
        return HiddenState(times=spec.times, values=values)

    if general:
        # N RK4 steps; stage data on the 2N-step refinement
        steps = n_steps
        h = spec.T / steps
        mats = np.empty((2 * steps + 1, n, n))
        affs = np.empty((2 * steps + 1, n))
        ghalf_dense = coeffs.gamma_half_dense(0.5)
        for j2 in range(2 * steps + 1):
            j4, j8 = 2 * j2, 4 * j2
            fb = f_path.dense[j8] + gain.values4[j4]
            mats[j2] = coeffs.dense_A[j8] + coeffs.dense_B[j8] @ fb
            gz = ghalf_dense[j8] @ coeffs.table.zeta[j8]
            affs[j2] = coeffs.dense_B[j8] @ (
                f_path.dense[j8] @ gz - target_sol.theta0_2[j2]
            )
    else:
        # 2N RK4 steps; stage data on the 4N-step refinement
        steps = 2 * n_steps
        h = spec.T / steps
        mats = np.empty((2 * steps + 1, n, n))
        for j4 in range(2 * steps + 1):
            j8 = 2 * j4
            mats[j4] = coeffs.dense_A[j8] + coeffs.dense_B[j8] @ gain.values4[j4]
        affs = np.zeros((2 * steps + 1, n))

    vals = np.empty((steps + 1, n))
    vals[0] = h0
    for i in range(steps):
        j = 2 * i
        y = vals[i]
        k1 = mats[j] @ y + affs[j]
        k2 = mats[j + 1] @ (y + 0.5 * h * k1) + affs[j + 1]
        k3 = mats[j + 1] @ (y + 0.5 * h * k2) + affs[j + 1]
        k4 = mats[j + 2] @ (y + h * k3) + affs[j + 2]
        vals[i + 1] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(vals)):
        raise NumericDomainError("optimal state diverged")
    out = vals if general else vals[::2].copy()
    return HiddenState(times=spec.times, values=out)


def optimal_strategy(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    riccati_sol: RiccatiSolution,
    target_sol: Optional[TargetSolution] = None,
    f_path=None,
    w_path: Optional[np.ndarray] = None,
    lambda_path: Optional[LambdaPath] = None,
    validate: bool = True,
) -> OptimalSolution:
    """Assemble the optimal plan, deviation, and cost from the backward solutions."""
    n_steps = spec.grid_steps
    general = target_sol is not None
    if general:
        if f_path is None:
            raise ConfigurationError("general-target mode needs the chosen F path")
        gain = target_sol.theta_hat
    else:
        gain = theta(coeffs, riccati_sol)

    sigma_nz = _sigma_nonzero(coeffs)
    if sigma_nz and w_path is None:
        raise ConfigurationError("sigma != 0: optimal_strategy needs w_path for a trajectory")
    state = optimal_state(spec, coeffs, gain, target_sol, f_path, w_path)

    if sigma_nz and lambda_path is None:
        from .montecarlo import simulate_lambda

        lambda_path = simulate_lambda(spec, w_path)
    g_half = _gamma_pow_nodes(spec, coeffs, lambda_path, 0.5)
    g_mhalf = _gamma_pow_nodes(spec, coeffs, lambda_path, -0.5)

    eye = np.eye(spec.n)
    theta_nodes = gain.values4[::4]
    values = np.empty((n_steps, spec.n))
    dev_vals = np.empty((n_steps, spec.n))
    if general:
        ghalf_dense = coeffs.gamma_half_dense(0.5)
        for i in range(n_steps):
            j8, j2 = 8 * i, 2 * i
            f = f_path.dense[j8]
            gz = ghalf_dense[j8] @ coeffs.table.zeta[j8]
            core = (theta_nodes[i] + f - eye) @ state.values[i] + f @ gz - target_sol.theta0_2[j2]
            values[i] = g_mhalf[i] @ core
            dev_vals[i] = g_half[i] @ (core + state.values[i])
    else:
        for i in range(n_steps):
            values[i] = g_mhalf[i] @ ((theta_nodes[i] - eye) @ state.values[i])
            dev_vals[i] = g_half[i] @ (theta_nodes[i] @ state.values[i])
    plan = ExecutionPlan(x_pre=spec.x0, values=values, terminal=spec.xi)
    d_term = g_half[-1] @ (state.values[-1] + g_half[-1] @ spec.xi)
    deviation = DeviationPath(d_pre=spec.d0, values=dev_vals, terminal=d_term)

    cost = optimal_cost(spec, riccati_sol, target_sol)

    if validate and not sigma_nz:
        check = deviation_of_plan(spec, coeffs, plan, lambda_path)
        gap = float(np.max(np.abs(check.values - deviation.values)))
        bmax = float(np.max(np.abs(coeffs.B)))
        scale = 1.0 + float(np.max(np.abs(deviation.values)))
        tol = (1.0 + 10.0 * bmax) * spec.dt * scale
        if gap > tol:
            raise NumericDomainError(
                f"feedback deviation disagrees with the plan deviation ({gap:.3e} > {tol:.3e})"
            )
    return OptimalSolution(
        state=state,
        plan=plan,
        deviation=deviation,
        cost=cost,
        mode="general-target" if general else "zero-target",
        riccati=riccati_sol,
        gain=gain,
        targets=target_sol,
    )


def optimal_cost(
    spec: MarketSpec,
    riccati_sol: RiccatiSolution,
    target_sol: Optional[TargetSolution] = None,
) -> float:
    """Analytic optimal cost from the time-0 backward solutions."""
    o = spec.O
    root = np.sqrt(spec.lambda0)
    g_half = o.T @ np.diag(root) @ o
    g_mhalf = o.T @ np.diag(1.0 / root) @ o
    g_inv = g_mhalf @ g_mhalf
    d, x = spec.d0, spec.x0
    y0 = riccati_sol.Y[0]
    if target_sol is None:
        eye = np.eye(spec.n)
        return float(
            d @ g_mhalf @ (y0 - 0.5 * eye) @ g_mhalf @ d
            - 2.0 * d @ g_mhalf @ y0 @ g_half @ x
            + x @ g_half @ y0 @ g_half @ x
        )
    h0 = g_mhalf @ d - g_half @ x
    return float(
        h0 @ y0 @ h0 - 2.0 * h0 @ target_sol.psi[0] + target_sol.V0
        - 0.5 * d @ g_inv @ d
    )


def solve_execution(
    spec: MarketSpec,
    mode: str = "auto",
    w_path: Optional[np.ndarray] = None,
    coeffs: Optional[CoefficientSet] = None,
    validate: bool = True,
) -> OptimalSolution:
    """End-to-end pipeline: coefficients, backward solves, optimal assembly.

    mode "auto" picks zero-target feedback when xi = 0 and zeta = 0, otherwise
    the general-target transformation; "plain"/"general" force a route.
    """
    from .model import derive_coefficients

    if coeffs is None:
        coeffs = derive_coefficients(spec)
    targets_zero = (not np.any(spec.xi != 0.0)) and (not np.any(coeffs.table.zeta != 0.0))
    if mode == "auto":
        mode = "plain" if targets_zero else "general"
    if mode == "plain":
        if not targets_zero:
            raise ConfigurationError("zero-target route requires xi = 0 and zeta = 0")
        sol = solve_riccati(coeffs)
        return optimal_strategy(spec, coeffs, sol, w_path=w_path, validate=validate)
    if mode != "general":
        raise ConfigurationError(f"unknown mode {mode!r}")
    f_path = choose_F(spec, coeffs)
    sol = solve_riccati_hat(coeffs, f_path)
    gain_hat = theta_hat(coeffs, f_path, sol)
    targets = solve_targets(spec, coeffs, f_path, sol, gain_hat)
    return optimal_strategy(
        spec, coeffs, sol, target_sol=targets, f_path=f_path, w_path=w_path, validate=validate
    )


def crossing_zero_oracle(
    horizon: float,
    x1: float,
    rho1: float,
    rho2: float,
    rho3: float,
    grid_steps: int,
) -> ExecutionPlan:
    """Reference optimal plan for two assets with symmetric resilience coupling.

    X1(s) = [(1+(T-s) rho1)(2+T rho2) - T(T-s) rho3^2] x1 / den,
    X2(s) = (T-2s) rho3 x1 / den,  den = (2+T rho1)(2+T rho2) - T^2 rho3^2.
    """
    if rho1 <= 0.0 or rho2 <= 0.0 or rho1 * rho2 <= rho3 ** 2:
        raise NumericDomainError("resilience matrix must be positive definite")
    times = np.linspace(0.0, horizon, grid_steps + 1)
    den = (2.0 + horizon * rho1) * (2.0 + horizon * rho2) - horizon ** 2 * rho3 ** 2
    s = times[:-1]
    x1_path = ((1.0 + (horizon - s) * rho1) * (2.0 + horizon * rho2)
               - horizon * (horizon - s) * rho3 ** 2) * x1 / den
    x2_path = (horizon - 2.0 * s) * rho3 * x1 / den
    values = np.column_stack([x1_path, x2_path])
    return ExecutionPlan(
        x_pre=np.array([x1, 0.0]),
        values=values,
        terminal=np.zeros(2),
    )
