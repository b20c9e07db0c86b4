"""Market specification and derived linear-quadratic coefficient processes.

The price impact is represented spectrally throughout: gamma(t) = O^T diag(lambda(t)) O
with a constant orthogonal frame O and strictly positive eigenvalue processes
lambda_j.  Fractional powers gamma^alpha are therefore exact (computed in the
eigenframe) and never go through a general matrix-root algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    IllConditionedImpactError,
    NoValidFError,
    NumericDomainError,
    ShapeError,
    UnsupportedScopeError,
)

ORTHO_TOL = 1e-12
SYM_TOL = 1e-10
DELTA_F = 1e-9  # positive-definiteness floor for F = R^{-1} Q

TimeVector = Callable[[float], np.ndarray]
TimeMatrix = Callable[[float], np.ndarray]


def sym(mat: np.ndarray) -> np.ndarray:
    """Symmetric part (M + M^T)/2."""
    return 0.5 * (mat + mat.T)


def frame_from_matrix(gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decompose a constant SPD impact matrix as gamma = O^T diag(lambda) O."""
    gamma = np.asarray(gamma, dtype=float)
    if not np.allclose(gamma, gamma.T, atol=1e-12):
        raise ShapeError("impact matrix must be symmetric")
    lam, vecs = np.linalg.eigh(gamma)
    if np.min(lam) <= 0.0:
        raise NumericDomainError("impact matrix must be positive definite")
    return vecs.T.copy(), lam.copy()


def _as_time_array(value, shape: tuple[int, ...], name: str):
    """Normalize a constant or callable input to a callable t -> ndarray."""
    if callable(value):
        def fn(t, _value=value):
            out = np.asarray(_value(t), dtype=float)
            if out.shape != shape:
                raise ShapeError(f"{name}({t}) has shape {out.shape}, expected {shape}")
            return out

        return fn
    const = np.asarray(value, dtype=float)
    if const.shape == () and shape == (1,):
        const = const.reshape(1)
    if const.shape == () and shape == (1, 1):
        const = const.reshape(1, 1)
    if const.shape != shape:
        raise ShapeError(f"constant {name} has shape {const.shape}, expected {shape}")
    const = const.copy()
    const.setflags(write=False)
    return lambda t, _c=const: _c


def _cumquad4(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral of grid samples, 4th-order Newton-Cotes pieces.

    ``values`` has shape (M+1, ...) on a uniform grid of step h, M >= 3.
    """
    m_steps = values.shape[0] - 1
    if m_steps < 3:
        raise ShapeError("cumulative quadrature needs at least 4 samples")
    out = np.zeros_like(values)
    f = values
    # first interval from a cubic through nodes 0..3
    out[1] = h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
    # interior intervals [j-1, j] from the cubic through j-2..j+1
    inc = h / 24.0 * (-f[:-3] + 13.0 * f[1:-2] + 13.0 * f[2:-1] - f[3:])
    for j in range(2, m_steps):
        out[j] = out[j - 1] + inc[j - 2]
    # last interval from the cubic through M-3..M
    out[m_steps] = out[m_steps - 1] + h / 24.0 * (
        f[m_steps - 3] - 5.0 * f[m_steps - 2] + 19.0 * f[m_steps - 1] + 9.0 * f[m_steps]
    )
    return out


@dataclass(frozen=True)
class LambdaPath:
    """A sampled eigenvalue path lambda_j(t_i) on a uniform grid."""

    times: np.ndarray  # (K+1,)
    values: np.ndarray  # (K+1, n), strictly positive

    def __post_init__(self):
        if self.values.shape[0] != self.times.shape[0]:
            raise ShapeError("lambda path times/values length mismatch")
        if not np.all(np.isfinite(self.values)) or np.min(self.values) <= 0.0:
            raise NumericDomainError("eigenvalue path must be finite and positive")

    def at(self, t: float) -> np.ndarray:
        """Left-node sample at time t (piecewise-constant convention)."""
        h = self.times[1] - self.times[0]
        idx = int(np.floor(t / h + 1e-9))
        idx = min(max(idx, 0), len(self.times) - 1)
        return self.values[idx]


@dataclass(frozen=True)
class MarketSpec:
    """Full problem instance for the multi-asset execution problem.

    Time-dependent inputs (mu, sigma, rho, Xi, zeta) are constants or callables
    of t; they are sampled once on construction-time grids and must be
    deterministic functions of time.
    """

    n: int
    m: int
    T: float
    O: np.ndarray
    lambda0: np.ndarray
    mu: TimeVector
    sigma: TimeMatrix
    rho: TimeMatrix
    Xi: TimeMatrix
    xi: np.ndarray
    zeta: TimeVector
    x0: np.ndarray
    d0: np.ndarray
    grid_steps: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ShapeError("need n >= 1 and m >= 1")
        if not self.T > 0.0:
            raise NumericDomainError("horizon T must be positive")
        if self.grid_steps < 2:
            raise ShapeError("grid_steps must be at least 2")
        o = np.asarray(self.O, dtype=float)
        if o.shape != (self.n, self.n):
            raise ShapeError(f"O must be {self.n}x{self.n}")
        if np.linalg.norm(o.T @ o - np.eye(self.n)) > ORTHO_TOL:
            raise NumericDomainError("O is not orthogonal to 1e-12")
        lam0 = np.asarray(self.lambda0, dtype=float)
        if lam0.shape != (self.n,):
            raise ShapeError(f"lambda0 must have length {self.n}")
        if np.min(lam0) <= 0.0:
            raise NumericDomainError("initial eigenvalues must be strictly positive")
        for name, vec in (("xi", self.xi), ("x0", self.x0), ("d0", self.d0)):
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (self.n,):
                raise ShapeError(f"{name} must have length {self.n}")
            if not np.all(np.isfinite(arr)):
                raise NumericDomainError(f"{name} must be finite")
            object.__setattr__(self, name, arr.copy())
        for arr in (o, lam0):
            arr.setflags(write=False)
        object.__setattr__(self, "O", o)
        object.__setattr__(self, "lambda0", lam0)
        object.__setattr__(self, "mu", _as_time_array(self.mu, (self.n,), "mu"))
        object.__setattr__(self, "sigma", _as_time_array(self.sigma, (self.n, self.m), "sigma"))
        object.__setattr__(self, "rho", _as_time_array(self.rho, (self.n, self.n), "rho"))
        object.__setattr__(self, "Xi", _as_time_array(self.Xi, (self.n, self.n), "Xi"))
        object.__setattr__(self, "zeta", _as_time_array(self.zeta, (self.n,), "zeta"))
        for t in self.times:
            xv = self.Xi(t)
            if np.linalg.norm(xv - xv.T) > ORTHO_TOL:
                raise NumericDomainError(f"Xi({t}) is not symmetric to 1e-12")

    @property
    def times(self) -> np.ndarray:
        """Uniform solver grid t_i = i T / grid_steps."""
        return np.linspace(0.0, self.T, self.grid_steps + 1)

    @property
    def dt(self) -> float:
        return self.T / self.grid_steps

    def with_grid(self, grid_steps: int) -> "MarketSpec":
        return replace(self, grid_steps=grid_steps)

    def sigma_is_zero(self, samples: int = 257) -> bool:
        ts = np.linspace(0.0, self.T, samples)
        return all(np.all(self.sigma(t) == 0.0) for t in ts)


@dataclass(frozen=True)
class _DenseTable:
    """Deterministic quantities sampled on the level-8 refinement grid.

    The level-8 grid (step T / (8 N)) contains every Runge-Kutta stage time of
    the nested backward/forward solves, so integrators read tables instead of
    interpolating.
    """

    times: np.ndarray          # (8N+1,)
    h: float
    mu: np.ndarray             # (8N+1, n)
    sigma: np.ndarray          # (8N+1, n, m)
    rho: np.ndarray            # (8N+1, n, n)
    Xi: np.ndarray             # (8N+1, n, n)
    zeta: np.ndarray           # (8N+1, n)
    cum_mu: np.ndarray         # (8N+1, n) cumulative integral of mu
    lam_det: np.ndarray        # (8N+1, n) deterministic eigenvalues lambda0*exp(cum_mu)

    def index(self, t: float) -> int:
        j = int(round(t / self.h))
        if abs(t - j * self.h) > 1e-9 * max(1.0, self.times[-1]):
            raise ShapeError(f"time {t} is not a level-8 grid node")
        return min(max(j, 0), len(self.times) - 1)


_TABLE_CACHE: dict = {}


def _build_table(spec: MarketSpec) -> _DenseTable:
    hit = _TABLE_CACHE.get(id(spec))
    if hit is not None and hit[0] is spec:
        return hit[1]
    n_fine = 8 * spec.grid_steps
    times = np.linspace(0.0, spec.T, n_fine + 1)
    h = spec.T / n_fine
    mu = np.stack([spec.mu(t) for t in times])
    sigma = np.stack([spec.sigma(t) for t in times])
    rho = np.stack([spec.rho(t) for t in times])
    xi_risk = np.stack([spec.Xi(t) for t in times])
    zeta = np.stack([spec.zeta(t) for t in times])
    cum_mu = _cumquad4(mu, h)
    lam_det = spec.lambda0[None, :] * np.exp(cum_mu)
    if not np.all(np.isfinite(lam_det)):
        raise NumericDomainError("deterministic eigenvalue path is non-finite")
    table = _DenseTable(times, h, mu, sigma, rho, xi_risk, zeta, cum_mu, lam_det)
    if len(_TABLE_CACHE) > 64:
        _TABLE_CACHE.clear()
    _TABLE_CACHE[id(spec)] = (spec, table)
    return table


def deterministic_lambda(spec: MarketSpec, t: float, table: Optional[_DenseTable] = None) -> np.ndarray:
    """lambda_j(t) = lambda_j(0) exp(int_0^t mu_j) for sigma = 0 eigenvalue dynamics."""
    if table is None:
        table = _build_table(spec)
    j = int(np.floor(t / table.h + 1e-12))
    j = min(max(j, 0), len(table.times) - 1)
    t_j = table.times[j]
    cum = table.cum_mu[j]
    if abs(t - t_j) > 1e-14 * max(1.0, spec.T):
        cum = cum + 0.5 * (t - t_j) * (table.mu[j] + spec.mu(t))
    lam = spec.lambda0 * np.exp(cum)
    if not np.all(np.isfinite(lam)):
        raise NumericDomainError(f"eigenvalues non-finite at t={t}")
    return lam


def gamma_power(
    spec: MarketSpec,
    t: float,
    lambda_path: Optional[LambdaPath] = None,
    alpha: float = 1.0,
) -> np.ndarray:
    """gamma^alpha(t) = O^T diag(lambda_j(t)^alpha) O, exact in the eigenframe.

    Without ``lambda_path`` the eigenvalues are the deterministic solution
    (requires sigma = 0); with a path, the sampled values at t are used.
    """
    if lambda_path is not None:
        lam = lambda_path.at(t)
    else:
        if not spec.sigma_is_zero():
            raise UnsupportedScopeError(
                "deterministic eigenvalues need sigma = 0; pass a simulated lambda_path"
            )
        lam = deterministic_lambda(spec, t)
    powered = lam ** alpha
    if not np.all(np.isfinite(powered)):
        raise NumericDomainError(f"lambda^{alpha} non-finite at t={t}")
    return sym(spec.O.T @ np.diag(powered) @ spec.O)


@dataclass(frozen=True)
class FPath:
    """Cross-term removal factor F with R F = Q on the grid."""

    times: np.ndarray      # level-1 grid
    values: np.ndarray     # (N+1, n, n)
    dense: np.ndarray = field(repr=False, default=None)  # (8N+1, n, n)

    def at_index8(self, j: int) -> np.ndarray:
        return self.dense[j]


@dataclass(frozen=True)
class CoefficientSet:
    """Derived LQ coefficients sampled on the solver grid.

    ``A``, ``B``, ``Ck``, ``Q``, ``kappa``, ``R`` are (N+1, n, n) arrays at the
    grid nodes; the level-8 dense tables back the Runge-Kutta stage lookups.
    R = Q + kappa holds exactly by construction.
    """

    spec: MarketSpec
    times: np.ndarray                  # (N+1,)
    A: np.ndarray                      # (N+1, n, n)
    B: np.ndarray
    Ck: np.ndarray                     # (m, N+1, n, n)
    Q: np.ndarray
    kappa: np.ndarray
    R: np.ndarray
    F: Optional[FPath]
    table: _DenseTable = field(repr=False, default=None)
    dense_A: np.ndarray = field(repr=False, default=None)   # (8N+1, n, n)
    dense_B: np.ndarray = field(repr=False, default=None)
    dense_Ck: np.ndarray = field(repr=False, default=None)  # (m, 8N+1, n, n)
    dense_Q: np.ndarray = field(repr=False, default=None)
    dense_kappa: np.ndarray = field(repr=False, default=None)
    dense_R: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def m(self) -> int:
        return self.spec.m

    def gamma_half_dense(self, alpha: float) -> np.ndarray:
        """(8N+1, n, n) array of gamma^alpha at level-8 nodes (deterministic lambda)."""
        lam = self.table.lam_det ** alpha
        o = self.spec.O
        return np.einsum("ji,tj,jk->tik", o, lam, o)

    def with_F(self, f_path: FPath) -> "CoefficientSet":
        return replace(self, F=f_path)


def _scaled_resilience(o: np.ndarray, rho_t: np.ndarray, lam_det_t: np.ndarray) -> np.ndarray:
    """gamma^{-1/2} rho gamma^{1/2} via eigenframe ratios of lambda."""
    r_frame = o @ rho_t @ o.T
    ratio = np.sqrt(lam_det_t[None, :] / lam_det_t[:, None])
    return o.T @ (r_frame * ratio) @ o


def derive_coefficients(spec: MarketSpec) -> CoefficientSet:
    """Sample all LQ coefficient processes of the execution problem.

    Enforces that the coefficients are deterministic functions of time: with a
    non-zero sigma the risk matrix must vanish and eigenvalue pairs coupled by
    the resilience (in the eigenframe) must share identical volatility rows,
    otherwise the scaled resilience would be random.
    """
    table = _build_table(spec)
    n, m = spec.n, spec.m
    o = spec.O
    n_nodes = len(table.times)

    sigma_nonzero = bool(np.any(table.sigma != 0.0))
    if sigma_nonzero:
        if np.any(table.Xi != 0.0):
            raise UnsupportedScopeError(
                "stochastic impact with a non-zero risk matrix makes Q random; "
                "set Xi = 0 or sigma = 0"
            )
        r_frame_max = np.max(np.abs(np.einsum("ij,tjk,lk->til", o, table.rho, o)), axis=0)
        for i in range(n):
            for j in range(n):
                if i == j or r_frame_max[i, j] <= 1e-12:
                    continue
                gap = np.max(np.abs(table.sigma[:, i, :] - table.sigma[:, j, :]))
                if gap > 1e-12:
                    raise UnsupportedScopeError(
                        "resilience couples eigenvalues with different volatilities; "
                        f"gamma^(-1/2) rho gamma^(1/2) would be random (assets {i},{j})"
                    )

    dense_ck = np.empty((m, n_nodes, n, n))
    for k in range(m):
        dense_ck[k] = 0.5 * np.einsum("ji,tj,jk->tik", o, table.sigma[:, :, k], o)
    sum_cc = np.einsum("ktij,ktjl->til", dense_ck, dense_ck)
    mu_frame = np.einsum("ji,tj,jk->tik", o, table.mu, o)

    g_scaled = np.empty((n_nodes, n, n))
    for idx in range(n_nodes):
        g_scaled[idx] = _scaled_resilience(o, table.rho[idx], table.lam_det[idx])
    if not np.all(np.isfinite(g_scaled)):
        raise IllConditionedImpactError(
            "gamma^(-1/2) rho gamma^(1/2) non-finite on the grid (eigenvalue underflow?)"
        )

    dense_a = 0.5 * mu_frame - 0.5 * sum_cc
    dense_b = -g_scaled - mu_frame + 2.0 * sum_cc
    dense_kappa = 0.5 * mu_frame - 2.0 * sum_cc + 0.5 * (g_scaled + np.swapaxes(g_scaled, 1, 2))

    if sigma_nonzero:
        dense_q = np.zeros((n_nodes, n, n))
    else:
        xi_frame = np.einsum("ij,tjk,lk->til", o, table.Xi, o)
        inv_scale = 1.0 / np.sqrt(table.lam_det[:, :, None] * table.lam_det[:, None, :])
        dense_q = np.einsum("ji,tjk,kl->til", o, xi_frame * inv_scale, o)
    dense_r = dense_q + dense_kappa

    stride = 8
    coeffs = CoefficientSet(
        spec=spec,
        times=spec.times,
        A=dense_a[::stride].copy(),
        B=dense_b[::stride].copy(),
        Ck=dense_ck[:, ::stride].copy(),
        Q=dense_q[::stride].copy(),
        kappa=dense_kappa[::stride].copy(),
        R=dense_r[::stride].copy(),
        F=None,
        table=table,
        dense_A=dense_a,
        dense_B=dense_b,
        dense_Ck=dense_ck,
        dense_Q=dense_q,
        dense_kappa=dense_kappa,
        dense_R=dense_r,
    )
    for name, path in (("A", coeffs.A), ("Q", coeffs.Q), ("kappa", coeffs.kappa), ("R", coeffs.R)):
        drift = np.max(np.abs(path - np.swapaxes(path, 1, 2)))
        if drift > SYM_TOL:
            raise NumericDomainError(f"coefficient {name} lost symmetry ({drift:.2e})")
    for k in range(m):
        drift = np.max(np.abs(coeffs.Ck[k] - np.swapaxes(coeffs.Ck[k], 1, 2)))
        if drift > SYM_TOL:
            raise NumericDomainError(f"coefficient C^{k + 1} lost symmetry ({drift:.2e})")
    return coeffs


def choose_F(spec: MarketSpec, coeffs: CoefficientSet) -> FPath:
    """Fix the cross-term factor F with R F = Q.

    F = 0 when Q vanishes; otherwise F = R^{-1} Q, which needs R uniformly
    positive definite (min eigenvalue >= DELTA_F on the whole grid).
    """
    n = spec.n
    if not np.any(np.abs(coeffs.dense_Q) > 0.0):
        dense = np.zeros_like(coeffs.dense_Q)
        return FPath(times=spec.times, values=dense[::8].copy(), dense=dense)
    min_eigs = np.linalg.eigvalsh(coeffs.dense_R).min(axis=1)
    bad = np.nonzero(min_eigs < DELTA_F)[0]
    if bad.size:
        t_bad = coeffs.table.times[bad[0]]
        raise NoValidFError(
            f"R is singular/indefinite at t={t_bad:.6g} (min eig {min_eigs[bad[0]]:.3e}); "
            "no bounded F with R F = Q",
            time=t_bad,
        )
    dense = np.linalg.solve(coeffs.dense_R, coeffs.dense_Q)
    residual = np.max(np.abs(np.einsum("tij,tjk->tik", coeffs.dense_R, dense) - coeffs.dense_Q))
    if residual > 1e-8:
        raise NoValidFError(f"R F = Q verification failed (residual {residual:.2e})")
    return FPath(times=spec.times, values=dense[::8].copy(), dense=dense)
