"""Deviation dynamics, execution costs, and the strategy/control bijection.

Strategies are piecewise constant with jumps at the grid nodes, so every
Stieltjes integral against dX is an exact finite sum.  Integrals over [t, r]
include the jump at t; integrals over (t, r] do not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    NumericDomainError,
    ShapeError,
    UnsupportedScopeError,
)
from .model import CoefficientSet, LambdaPath, MarketSpec

RESOLVENT_TOL = 1e-8


@dataclass(frozen=True)
class Resolvent:
    """Fundamental solution nu of d nu = nu rho ds with nu(t_0) = I, plus its inverse."""

    times: np.ndarray
    nu: np.ndarray       # (K+1, n, n)
    nu_inv: np.ndarray   # (K+1, n, n)


@dataclass(frozen=True)
class ExecutionPlan:
    """Cadlag piecewise-constant position path on the solver grid.

    ``values[i]`` is X(t_i) on [t_i, t_{i+1}) for i = 0..N-1; ``terminal`` is
    X(T) after the final block trade; ``x_pre`` is X(t_0-).
    """

    x_pre: np.ndarray      # (n,)
    values: np.ndarray     # (N, n)
    terminal: np.ndarray   # (n,)

    def __post_init__(self):
        for name in ("x_pre", "values", "terminal"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise NumericDomainError(f"plan {name} has non-finite entries")
            object.__setattr__(self, name, arr)
        if self.values.ndim != 2:
            raise ShapeError("plan values must be a (steps, n) array")

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    def jumps(self) -> np.ndarray:
        """Block trades Delta X at t_0, ..., t_{N-1}, T  -> (N+1, n)."""
        full = np.vstack([self.x_pre, self.values, self.terminal])
        return np.diff(full, axis=0)

    def perturbed(self, node: int, bump: np.ndarray) -> "ExecutionPlan":
        """New plan with an additive bump at one interior node (terminal unchanged)."""
        vals = self.values.copy()
        vals[node] = vals[node] + bump
        return ExecutionPlan(self.x_pre, vals, self.terminal)


@dataclass(frozen=True)
class DeviationPath:
    """Price deviation along a plan: post-jump node values plus the terminal value."""

    d_pre: np.ndarray
    values: np.ndarray     # (N, n) at t_0..t_{N-1}
    terminal: np.ndarray   # D(T)

    def __post_init__(self):
        for name in ("d_pre", "values", "terminal"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise NumericDomainError(f"deviation {name} has non-finite entries")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class HiddenState:
    """Solution grid of the controlled hidden-deviation SDE."""

    times: np.ndarray
    values: np.ndarray     # (N+1, n)


_RES_CACHE: dict = {}


def resolvent(rho: Callable[[float], np.ndarray], times: np.ndarray) -> Resolvent:
    """RK4 integration of d nu = nu rho ds and d nu^{-1} = -rho nu^{-1} ds.

    Each grid cell is integrated with four RK4 substeps so the inverse-product
    identity holds to 1e-8 even on coarse grids.
    """
    times = np.asarray(times, dtype=float)
    key = (id(rho), times.tobytes())
    hit = _RES_CACHE.get(key)
    if hit is not None and hit[0] is rho:
        return hit[1]
    n = np.asarray(rho(times[0])).shape[0]
    steps = len(times) - 1
    sub = 4
    nu = np.empty((steps + 1, n, n))
    nu_inv = np.empty((steps + 1, n, n))
    nu[0] = np.eye(n)
    nu_inv[0] = np.eye(n)
    for i in range(steps):
        h = (times[i + 1] - times[i]) / sub
        v, w = nu[i], nu_inv[i]
        for s in range(sub):
            t = times[i] + s * h
            r0, rh, r1 = rho(t), rho(t + 0.5 * h), rho(t + h)

            k1 = v @ r0
            k2 = (v + 0.5 * h * k1) @ rh
            k3 = (v + 0.5 * h * k2) @ rh
            k4 = (v + h * k3) @ r1
            v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

            k1 = -r0 @ w
            k2 = -rh @ (w + 0.5 * h * k1)
            k3 = -rh @ (w + 0.5 * h * k2)
            k4 = -r1 @ (w + h * k3)
            w = w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nu[i + 1], nu_inv[i + 1] = v, w
    if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(nu_inv))):
        raise NumericDomainError("resolvent overflowed; resilience too large for the grid")
    prod_err = max(
        np.linalg.norm(nu[i] @ nu_inv[i] - np.eye(n)) for i in range(steps + 1)
    )
    if prod_err > RESOLVENT_TOL:
        raise NumericDomainError(f"resolvent inverse-product drift {prod_err:.2e} > {RESOLVENT_TOL}")
    result = Resolvent(times=times, nu=nu, nu_inv=nu_inv)
    if len(_RES_CACHE) > 64:
        _RES_CACHE.clear()
    _RES_CACHE[key] = (rho, result)
    return result


def _gamma_at_nodes(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    lambda_path: Optional[LambdaPath],
    alpha: float = 1.0,
) -> np.ndarray:
    """gamma^alpha at the level-1 nodes, from the deterministic path or a sample."""
    if lambda_path is None:
        lam = coeffs.table.lam_det[::8]
    else:
        lam = np.stack([lambda_path.at(t) for t in spec.times])
    o = spec.O
    return np.einsum("ji,tj,jk->tik", o, lam ** alpha, o)


def _check_plan(spec: MarketSpec, plan: ExecutionPlan) -> None:
    if plan.steps != spec.grid_steps:
        raise ShapeError(
            f"plan has {plan.steps} interior nodes, spec grid has {spec.grid_steps}"
        )
    if plan.values.shape[1] != spec.n:
        raise ShapeError("plan dimension does not match spec")


def deviation_of_plan(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    plan: ExecutionPlan,
    lambda_path: Optional[LambdaPath] = None,
) -> DeviationPath:
    """Deviation D(r) = nu^{-1}(r) (d + sum_{t_i <= r} nu(t_i) gamma(t_i) Delta X(t_i))."""
    _check_plan(spec, plan)
    res = resolvent(spec.rho, spec.times)
    gammas = _gamma_at_nodes(spec, coeffs, lambda_path, 1.0)
    jumps = plan.jumps()
    n_steps = spec.grid_steps
    d = spec.d0.copy()
    values = np.empty((n_steps, spec.n))
    acc = d.copy()
    for i in range(n_steps):
        acc = acc + res.nu[i] @ (gammas[i] @ jumps[i])
        values[i] = res.nu_inv[i] @ acc
    acc = acc + res.nu[n_steps] @ (gammas[n_steps] @ jumps[n_steps])
    terminal = res.nu_inv[n_steps] @ acc
    return DeviationPath(d_pre=d, values=values, terminal=terminal)


def _block_cost(
    nu: np.ndarray,
    nu_inv: np.ndarray,
    gammas: np.ndarray,
    jumps: np.ndarray,
    d_pre: np.ndarray,
) -> float:
    """Exact Stieltjes cost of block trades: sum D(t_i-)^T dX + 1/2 dX^T gamma dX."""
    acc = d_pre.copy()
    total = 0.0
    for i in range(jumps.shape[0]):
        d_minus = nu_inv[i] @ acc
        total += float(d_minus @ jumps[i]) + 0.5 * float(jumps[i] @ gammas[i] @ jumps[i])
        acc = acc + nu[i] @ (gammas[i] @ jumps[i])
    return total


def pathwise_cost(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    plan: ExecutionPlan,
    lambda_path: Optional[LambdaPath] = None,
) -> float:
    """Pathwise execution cost of a piecewise-constant plan (exact block sums)."""
    _check_plan(spec, plan)
    res = resolvent(spec.rho, spec.times)
    gammas = _gamma_at_nodes(spec, coeffs, lambda_path, 1.0)
    return _block_cost(res.nu, res.nu_inv, gammas, plan.jumps(), spec.d0)


def pathwise_cost_asymmetric(
    gamma_tilde: np.ndarray,
    rho: Callable[[float], np.ndarray] | np.ndarray,
    plan: ExecutionPlan,
    times: np.ndarray,
    d_pre: Optional[np.ndarray] = None,
) -> float:
    """Cost variant accepting a raw (possibly asymmetric) impact matrix.

    Exists for the round-trip arbitrage demonstration; the solver itself only
    admits the symmetric spectral impact.
    """
    gamma_tilde = np.asarray(gamma_tilde, dtype=float)
    times = np.asarray(times, dtype=float)
    n = gamma_tilde.shape[0]
    if plan.steps != len(times) - 1:
        raise ShapeError("plan nodes and time grid mismatch")
    rho_fn = rho if callable(rho) else (lambda t, _r=np.asarray(rho, float): _r)
    res = resolvent(rho_fn, times)
    gammas = np.broadcast_to(gamma_tilde, (len(times), n, n))
    if d_pre is None:
        d_pre = np.zeros(n)
    return _block_cost(res.nu, res.nu_inv, gammas, plan.jumps(), np.asarray(d_pre, float))


def risk_cost(spec: MarketSpec, plan: ExecutionPlan) -> float:
    """Running-target penalty int (X - zeta)^T Xi (X - zeta) ds, trapezoid in time."""
    from .model import _build_table

    _check_plan(spec, plan)
    table = _build_table(spec)
    pos = np.vstack([plan.values, plan.terminal])
    err = pos - table.zeta[::8]
    vals = np.einsum("ti,tij,tj->t", err, table.Xi[::8], err)
    return float(np.trapezoid(vals, spec.times))


def cost_quadratic_form(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    plan: ExecutionPlan,
    lambda_path: Optional[LambdaPath] = None,
) -> float:
    """Quadratic-form representation of the expected execution cost, one path.

    1/2 D(T)^T gamma^{-1}(T) D(T) - 1/2 d^T gamma^{-1}(0) d
    + int D^T gamma^{-1/2} kappa gamma^{-1/2} D ds  (trapezoid on the grid).
    """
    dev = deviation_of_plan(spec, coeffs, plan, lambda_path)
    g_minus_half = _gamma_at_nodes(spec, coeffs, lambda_path, -0.5)
    g_inv_T = g_minus_half[-1] @ g_minus_half[-1]
    g_inv_0 = g_minus_half[0] @ g_minus_half[0]
    n_steps = spec.grid_steps

    res = resolvent(spec.rho, spec.times)
    # left limit at T: decay of the last post-jump value over the final cell
    d_T_minus = res.nu_inv[n_steps] @ (res.nu[n_steps - 1] @ dev.values[n_steps - 1])

    integrand = np.empty(n_steps + 1)
    for i in range(n_steps + 1):
        d_i = dev.values[i] if i < n_steps else d_T_minus
        scaled = g_minus_half[i] @ d_i
        integrand[i] = scaled @ coeffs.kappa[i] @ scaled
    quad = float(np.trapezoid(integrand, spec.times))
    return (
        0.5 * float(dev.terminal @ g_inv_T @ dev.terminal)
        - 0.5 * float(spec.d0 @ g_inv_0 @ spec.d0)
        + quad
    )


def _sigma_nonzero(coeffs: CoefficientSet) -> bool:
    return bool(np.any(coeffs.table.sigma != 0.0))


def hidden_state(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    u: np.ndarray,
    w_path: Optional[np.ndarray] = None,
) -> HiddenState:
    """Integrate the hidden-deviation state driven by a grid control.

    sigma = 0: RK4 with the control held constant on each cell (left value).
    sigma != 0: Euler-Maruyama with the supplied Brownian increments (N, m).
    """
    u = np.asarray(u, dtype=float)
    n_steps = spec.grid_steps
    if u.shape[0] not in (n_steps, n_steps + 1) or u.shape[1] != spec.n:
        raise ShapeError(f"control grid must be ({n_steps}+1, {spec.n})")
    o = spec.O
    root = np.sqrt(spec.lambda0)
    g_half0 = o.T @ np.diag(root) @ o
    g_mhalf0 = o.T @ np.diag(1.0 / root) @ o
    h0 = g_mhalf0 @ spec.d0 - g_half0 @ spec.x0

    values = np.empty((n_steps + 1, spec.n))
    values[0] = h0
    h = spec.dt
    if _sigma_nonzero(coeffs):
        if w_path is None:
            raise ConfigurationError("sigma != 0: hidden_state needs Brownian increments w_path")
        w_path = np.asarray(w_path, dtype=float)
        if w_path.shape != (n_steps, spec.m):
            raise ShapeError(f"w_path must have shape ({n_steps}, {spec.m})")
        for i in range(n_steps):
            j = 8 * i
            a_i, b_i = coeffs.dense_A[j], coeffs.dense_B[j]
            drift = a_i @ values[i] + b_i @ u[i]
            diff = np.zeros(spec.n)
            for k in range(spec.m):
                c = coeffs.dense_Ck[k, j]
                diff += (c @ (values[i] - 2.0 * u[i])) * w_path[i, k]
            values[i + 1] = values[i] + h * drift + diff
    else:
        for i in range(n_steps):
            j = 8 * i
            stage = (
                (coeffs.dense_A[j], coeffs.dense_B[j]),
                (coeffs.dense_A[j + 4], coeffs.dense_B[j + 4]),
                (coeffs.dense_A[j + 8], coeffs.dense_B[j + 8]),
            )
            ui = u[i]
            y = values[i]
            k1 = stage[0][0] @ y + stage[0][1] @ ui
            k2 = stage[1][0] @ (y + 0.5 * h * k1) + stage[1][1] @ ui
            k3 = stage[1][0] @ (y + 0.5 * h * k2) + stage[1][1] @ ui
            k4 = stage[2][0] @ (y + h * k3) + stage[2][1] @ ui
            values[i + 1] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return HiddenState(times=spec.times, values=values)


def phi(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    plan: ExecutionPlan,
    lambda_path: Optional[LambdaPath] = None,
) -> np.ndarray:
    """Control associated to a strategy: u = gamma^{-1/2} D^X on the grid."""
    dev = deviation_of_plan(spec, coeffs, plan, lambda_path)
    g_mhalf = _gamma_at_nodes(spec, coeffs, lambda_path, -0.5)
    u = np.empty((spec.grid_steps + 1, spec.n))
    for i in range(spec.grid_steps):
        u[i] = g_mhalf[i] @ dev.values[i]
    u[-1] = g_mhalf[-1] @ dev.terminal
    return u


def phi_bar(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    u: np.ndarray,
    w_path: Optional[np.ndarray] = None,
) -> ExecutionPlan:
    """Strategy associated to a control: X = gamma^{-1/2}(u - H^u) on [t, T)."""
    state = hidden_state(spec, coeffs, u, w_path)
    g_mhalf = _gamma_at_nodes(spec, coeffs, None, -0.5) if not _sigma_nonzero(coeffs) else None
    if g_mhalf is None:
        raise UnsupportedScopeError(
            "phi_bar with sigma != 0 needs a simulated eigenvalue path; "
            "use the Monte Carlo engine"
        )
    values = np.empty((spec.grid_steps, spec.n))
    for i in range(spec.grid_steps):
        values[i] = g_mhalf[i] @ (u[i] - state.values[i])
    return ExecutionPlan(x_pre=spec.x0, values=values, terminal=spec.xi)


def metric(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    plan_a: ExecutionPlan,
    plan_b: ExecutionPlan,
    lambda_path: Optional[LambdaPath] = None,
) -> float:
    """Deviation metric d(X, X~) = (int (D-D~)^T gamma^{-1} (D-D~) ds)^{1/2}.

    Left Riemann sum on the grid, matching the cadlag convention.
    """
    dev_a = deviation_of_plan(spec, coeffs, plan_a, lambda_path)
    dev_b = deviation_of_plan(spec, coeffs, plan_b, lambda_path)
    g_mhalf = _gamma_at_nodes(spec, coeffs, lambda_path, -0.5)
    total = 0.0
    for i in range(spec.grid_steps):
        diff = g_mhalf[i] @ (dev_a.values[i] - dev_b.values[i])
        total += float(diff @ diff)
    return float(np.sqrt(total * spec.dt))


def fv_approximate(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    u: np.ndarray,
    levels: int,
) -> list[ExecutionPlan]:
    """Finite-variation approximations of the strategy phi_bar(u), sigma = 0 only.

    Level k holds the frame-rotated control O u constant on 2^{k+2} pieces
    (left-sampled) and maps back through phi_bar; the deviation metric to
    phi_bar(u) decreases with the level.
    """
    if _sigma_nonzero(coeffs):
        raise UnsupportedScopeError("fv_approximate is restricted to sigma = 0")
    u = np.asarray(u, dtype=float)
    n_steps = spec.grid_steps
    plans = []
    o = spec.O
    v = u @ o.T  # rows v(t_i) = O u(t_i)
    for k in range(levels):
        pieces = 2 ** (k + 2)
        if n_steps % pieces != 0:
            raise ShapeError(
                f"grid_steps={n_steps} not divisible by {pieces} pieces at level {k}"
            )
        width = n_steps // pieces
        idx = (np.arange(n_steps) // width) * width
        v_coarse = v[idx]
        u_coarse = np.vstack([v_coarse, v[-1][None, :]]) @ o
        plans.append(phi_bar(spec, coeffs, u_coarse))
    return plans
