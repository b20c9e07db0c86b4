"""Stochastic path simulation, Monte Carlo cost estimation, and demos.

Per-path Brownian increments come from a counter-based generator keyed by
(seed, path index), so results are bit-identical for any worker count, and
the same seed reuses the same driver paths across compared strategies
(common random numbers).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import expm

from .errors import (
    DegenerateInputError,
    NumericDomainError,
    PreconditionError,
    ShapeError,
)
from .lindyn import ExecutionPlan, resolvent
from .model import CoefficientSet, FPath, LambdaPath, MarketSpec, derive_coefficients
from .riccati import FeedbackGain, RiccatiSolution, TargetSolution

# Matrices of the indefinite-kappa blow-up example
BLOWUP_GAMMA = np.array([[2.0, 1.0], [1.0, 1.0]])
BLOWUP_RHO = np.array([[1.0, 2.0], [2.0, 5.0]])


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run parameters."""

    n_paths: int
    seed: int
    grid_steps: Optional[int] = None

    def __post_init__(self):
        if self.n_paths < 1:
            raise ShapeError("n_paths must be at least 1")
        if self.seed < 0:
            raise ShapeError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    stderr: float
    n_paths: int

    def __post_init__(self):
        if self.stderr < 0.0:
            raise NumericDomainError("stderr must be non-negative")


@dataclass(frozen=True)
class FeedbackRule:
    """Optimal feedback rule applied along each simulated path."""

    riccati: RiccatiSolution
    gain: FeedbackGain
    targets: Optional[TargetSolution] = None
    f_path: Optional[FPath] = None


StrategyRule = Union[ExecutionPlan, FeedbackRule]


def path_increments(seed: int, path_index: int, steps: int, m: int, dt: float) -> np.ndarray:
    """Brownian increments of one path from a splittable counter-based stream."""
    key = np.array([seed, path_index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.standard_normal((steps, m)) * np.sqrt(dt)


def simulate_lambda(spec: MarketSpec, w_path: np.ndarray) -> LambdaPath:
    """Exact log-scheme for the eigenvalue dynamics, strictly positive output.

    lambda_j(t_{i+1}) = lambda_j(t_i) exp((mu_j - 1/2 sum_k sigma_jk^2) dt
    + sum_k sigma_jk dW_k), with left-point sampling of the coefficients.
    """
    w_path = np.asarray(w_path, dtype=float)
    steps = w_path.shape[0]
    if w_path.ndim != 2 or w_path.shape[1] != spec.m:
        raise ShapeError(f"w_path must have shape (steps, {spec.m})")
    times = np.linspace(0.0, spec.T, steps + 1)
    lam = _lambda_batch(spec, times, w_path[None, :, :])[0]
    return LambdaPath(times=times, values=lam)


def _lambda_batch(spec: MarketSpec, times: np.ndarray, dws: np.ndarray) -> np.ndarray:
    """(P, K+1, n) eigenvalue paths for a batch of increments (P, K, m)."""
    paths, steps, _ = dws.shape
    dt = times[1] - times[0]
    log_lam = np.empty((paths, steps + 1, spec.n))
    log_lam[:, 0] = np.log(spec.lambda0)
    for i in range(steps):
        mu_i = spec.mu(times[i])
        sig_i = spec.sigma(times[i])
        drift = (mu_i - 0.5 * np.sum(sig_i ** 2, axis=1)) * dt
        log_lam[:, i + 1] = log_lam[:, i] + drift + dws[:, i] @ sig_i.T
    return np.exp(log_lam)


def _frame_apply(o: np.ndarray, lam_pow: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Row-wise gamma^alpha v = O^T (lambda^alpha * (O v)); lam_pow broadcasts over rows."""
    return (lam_pow * (rows @ o.T)) @ o


def _snap_indices(src_times: np.ndarray, dst_times: np.ndarray) -> np.ndarray:
    h = src_times[1] - src_times[0]
    idx = np.rint(dst_times / h).astype(int)
    return np.clip(idx, 0, len(src_times) - 1)


def _feedback_path_costs(
    spec: MarketSpec,
    mc_coeffs: CoefficientSet,
    rule: FeedbackRule,
    times: np.ndarray,
    dws: np.ndarray,
) -> np.ndarray:
    o = spec.O
    n = spec.n
    paths = dws.shape[0]
    steps = len(times) - 1
    dt = times[1] - times[0]
    eye = np.eye(n)
    lam = _lambda_batch(spec, times, dws)

    thetas = rule.gain.values4[_snap_indices(rule.gain.times4, times)]
    general = rule.targets is not None
    if general:
        theta0 = rule.targets.theta0_2[_snap_indices(rule.targets.times2, times)]
        f_vals = rule.f_path.values[_snap_indices(rule.f_path.times, times)]
        ghalf_det = mc_coeffs.gamma_half_dense(0.5)[::8]
        gz_det = np.einsum("tij,tj->ti", ghalf_det, mc_coeffs.table.zeta[::8])

    root0 = np.sqrt(spec.lambda0)
    h0 = o.T @ ((o @ spec.d0) / root0) - o.T @ ((o @ spec.x0) * root0)
    h_state = np.empty((paths, steps + 1, n))
    h_state[:, 0] = h0

    for i in range(steps):
        j8 = 8 * i
        a_i = mc_coeffs.dense_A[j8]
        b_i = mc_coeffs.dense_B[j8]
        th = thetas[i]
        cur = h_state[:, i]
        if general:
            fb = f_vals[i] + th
            fgz = f_vals[i] @ gz_det[i]
            drift = cur @ (a_i + b_i @ fb).T + (b_i @ (fgz - theta0[i]))
            loop = eye - 2.0 * fb
            noise_shift = 2.0 * (theta0[i] - fgz)
        else:
            drift = cur @ (a_i + b_i @ th).T
            loop = eye - 2.0 * th
            noise_shift = None
        incr = dt * drift
        for k in range(spec.m):
            c = mc_coeffs.dense_Ck[k, j8]
            vec = cur @ (c @ loop).T
            if noise_shift is not None:
                vec = vec + c @ noise_shift
            incr = incr + vec * dws[:, i, k][:, None]
        h_state[:, i + 1] = cur + incr

    u = np.einsum("tij,ptj->pti", thetas, h_state)
    if general:
        u = u + np.einsum("tij,ptj->pti", f_vals, h_state)
        u = u + (np.einsum("tij,tj->ti", f_vals, gz_det) - theta0)[None, :, :]
    x_pos = _frame_apply(o, lam ** -0.5, u - h_state)
    return _cost_from_paths(spec, mc_coeffs, times, lam, u, x_pos, h_state)


def _plan_path_costs(
    spec: MarketSpec,
    mc_coeffs: CoefficientSet,
    plan: ExecutionPlan,
    times: np.ndarray,
    dws: np.ndarray,
) -> np.ndarray:
    o = spec.O
    n = spec.n
    paths = dws.shape[0]
    steps = len(times) - 1
    lam = _lambda_batch(spec, times, dws)
    if plan.values.shape[1] != n:
        raise ShapeError("plan dimension mismatch")

    plan_times = np.linspace(0.0, spec.T, plan.steps + 1)
    res = resolvent(spec.rho, times)
    jumps = np.zeros((steps + 1, n))
    for j, i_dst in enumerate(_snap_indices(times, plan_times)):
        jumps[i_dst] += plan.jumps()[j]
    node_idx = np.clip(
        np.floor(times[:-1] / (spec.T / plan.steps) + 1e-9).astype(int), 0, plan.steps - 1
    )

    acc = np.broadcast_to(spec.d0, (paths, n)).copy()
    dev = np.empty((paths, steps + 1, n))
    x_pos = np.empty((paths, steps + 1, n))
    dev_T_minus = None
    for i in range(steps + 1):
        if i == steps:
            dev_T_minus = acc @ res.nu_inv[i].T
        gam_jump = _frame_apply(o, lam[:, i], np.broadcast_to(jumps[i], (paths, n)))
        acc = acc + gam_jump @ res.nu[i].T
        dev[:, i] = acc @ res.nu_inv[i].T
        x_pos[:, i] = plan.values[node_idx[i]] if i < steps else plan.terminal
    u = _frame_apply(o, lam ** -0.5, dev)
    h_state = u - _frame_apply(o, lam ** 0.5, x_pos)
    # integrands at T use the pre-jump deviation (left limit of the cadlag path)
    u_int = u.copy()
    u_int[:, steps] = _frame_apply(o, lam[:, steps] ** -0.5, dev_T_minus)
    return _cost_from_paths(spec, mc_coeffs, times, lam, u_int, x_pos, h_state)


def _cost_from_paths(
    spec: MarketSpec,
    mc_coeffs: CoefficientSet,
    times: np.ndarray,
    lam: np.ndarray,
    u: np.ndarray,
    x_pos: np.ndarray,
    h_state: np.ndarray,
) -> np.ndarray:
    o = spec.O
    kap = mc_coeffs.dense_kappa[::8]
    xi_risk = mc_coeffs.table.Xi[::8]
    zeta = mc_coeffs.table.zeta[::8]
    g_inv0 = o.T @ np.diag(1.0 / spec.lambda0) @ o
    d0_term = 0.5 * float(spec.d0 @ g_inv0 @ spec.d0)

    ukap = np.einsum("pti,tij,ptj->pt", u, kap, u)
    err = x_pos - zeta[None, :, :]
    risk = np.einsum("pti,tij,ptj->pt", err, xi_risk, err)
    integral = np.trapezoid(ukap + risk, times, axis=1)

    gxi_T = _frame_apply(o, lam[:, -1] ** 0.5, np.broadcast_to(spec.xi, h_state[:, -1].shape))
    term = h_state[:, -1] + gxi_T
    costs = 0.5 * np.sum(term * term, axis=1) - d0_term + integral
    if not np.all(np.isfinite(costs)):
        bad = int(np.nonzero(~np.isfinite(costs))[0][0])
        raise NumericDomainError(f"non-finite per-path cost at path index {bad}")
    return costs


def mc_cost(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    strategy_rule: StrategyRule,
    config: SimConfig,
    workers: int = 1,
) -> MCEstimate:
    """Monte Carlo estimate of the execution cost of a plan or feedback rule.

    Identical (seed, n_paths, grid_steps) give bit-identical estimates for any
    worker count: per-path streams are keyed by (seed, path index) and the
    reduction is a fixed-order pairwise sum over the per-path cost array.
    """
    steps = config.grid_steps or spec.grid_steps
    if steps % spec.grid_steps != 0:
        raise ShapeError("simulation grid must refine the solver grid")
    times = np.linspace(0.0, spec.T, steps + 1)
    mc_coeffs = coeffs if steps == spec.grid_steps else derive_coefficients(spec.with_grid(steps))

    costs = np.empty(config.n_paths)
    dt = times[1] - times[0]

    def run_chunk(lo: int, hi: int) -> None:
        dws = np.empty((hi - lo, steps, spec.m))
        for row, p in enumerate(range(lo, hi)):
            dws[row] = path_increments(config.seed, p, steps, spec.m, dt)
        if isinstance(strategy_rule, FeedbackRule):
            costs[lo:hi] = _feedback_path_costs(spec, mc_coeffs, strategy_rule, times, dws)
        else:
            costs[lo:hi] = _plan_path_costs(spec, mc_coeffs, strategy_rule, times, dws)

    # fixed batch size independent of the worker count: the same per-path
    # arrays are computed for any scheduling, so estimates are bit-identical
    batch = 1024
    bounds = list(range(0, config.n_paths, batch)) + [config.n_paths]
    chunks = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]
    if workers <= 1 or len(chunks) == 1:
        for lo, hi in chunks:
            run_chunk(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run_chunk, lo, hi) for lo, hi in chunks]:
                fut.result()

    mean = float(np.sum(costs) / config.n_paths)
    stderr = float(np.std(costs, ddof=1) / np.sqrt(config.n_paths)) if config.n_paths > 1 else 0.0
    return MCEstimate(mean=mean, stderr=stderr, n_paths=config.n_paths)


def asymmetric_roundtrip(
    gamma_tilde: np.ndarray,
    rho: np.ndarray,
    n_shares: float,
    h: float,
    direction: Optional[int] = None,
) -> float:
    """Exact cost of the four-block round trip exposing asymmetric impact.

    Trades +N e1 at 0, +a e2 at h, -N e1 at 2h, -a e2 at 3h, with
    a = sign(e1^T (gamma - gamma^T) e2) unless a direction is supplied.
    As h -> 0 the cost tends to -N a e1^T (gamma - gamma^T) e2.
    """
    gamma_tilde = np.asarray(gamma_tilde, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if h <= 0.0:
        raise PreconditionError("block spacing h must be positive")
    skew = float(gamma_tilde[0, 1] - gamma_tilde[1, 0])
    if direction is None:
        if skew == 0.0:
            raise DegenerateInputError(
                "impact matrix is symmetric: the round trip has no arbitrage direction"
            )
        a = float(np.sign(skew))
    else:
        a = float(direction)
    n_dim = gamma_tilde.shape[0]
    e1 = np.zeros(n_dim)
    e1[0] = 1.0
    e2 = np.zeros(n_dim)
    e2[1] = 1.0
    nu = [expm(rho * (j * h)) for j in range(4)]
    nu_inv = [expm(-rho * (j * h)) for j in range(4)]
    gt = gamma_tilde.T
    n_sh = float(n_shares)
    term_n2 = n_sh ** 2 * float(e1 @ gamma_tilde @ e1 - e1 @ gt @ nu[0].T @ nu_inv[2].T @ e1)
    term_a2 = a ** 2 * float(e2 @ gamma_tilde @ e2 - e2 @ gt @ nu[1].T @ nu_inv[3].T @ e2)
    term_na = n_sh * a * float(
        e1 @ gt @ nu[0].T @ nu_inv[1].T @ e2
        - e2 @ gt @ nu[1].T @ nu_inv[2].T @ e1
        - e1 @ gt @ nu[0].T @ nu_inv[3].T @ e2
        + e1 @ gt @ nu[2].T @ nu_inv[3].T @ e2
    )
    return term_n2 + term_a2 + term_na


def blowup_demo(horizon: float, k: float, x: np.ndarray) -> float:
    """Exact cost of the blow-up strategy in the indefinite-kappa example.

    Initial block k^2/2, interior trading -T k^2, and a closing block worth
    k^2 (5 T^2 - 1)/2 + k T (x1 + 2 x2) + x^T gamma x / 2; for T < 2/5 the
    total k^2 T (5 T - 2)/2 + O(k) is unbounded below in k.
    """
    if horizon >= 0.4:
        raise PreconditionError("blow-up demo needs horizon T < 2/5")
    if horizon <= 0.0:
        raise PreconditionError("horizon must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ShapeError("x must be a 2-vector")
    x1, x2 = x
    initial = 0.5 * k ** 2
    interior = -horizon * k ** 2
    closing = (
        0.5 * k ** 2 * (5.0 * horizon ** 2 - 1.0)
        + 0.5 * k * (2.0 * horizon * x1 + 4.0 * horizon * x2)
        + 0.5 * (2.0 * x1 ** 2 + 2.0 * x1 * x2 + x2 ** 2)
    )
    return initial + interior + closing
