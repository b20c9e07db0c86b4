"""Backward Riccati and linear ODE solvers for deterministic coefficient paths.

With deterministic coefficients the martingale integrands of the backward
equations vanish, so the Riccati equation is a matrix ODE integrated here by
a fixed-step RK4 sweep from the terminal condition Y(T) = I/2.

Grids are nested refinements of the solver grid (N steps): Y lives on the
4N-step grid, the target vector psi on the 2N-step grid, so every
Runge-Kutta stage of a coarser solve reads exact values from the finer one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericDomainError, ShapeError, SingularDriverError, UnsupportedScopeError
from .model import CoefficientSet, FPath, MarketSpec, _cumquad4, sym

EPS_PD = 1e-9       # definiteness floor for the inverted block
SYM_DRIFT_TOL = 1e-9


@dataclass(frozen=True)
class RiccatiSolution:
    """Backward grid of symmetric matrices Y(t_i) with Y(T) = I/2.

    ``Y`` holds the solver-grid nodes; ``Y4``/``times4`` the 4N-step refinement
    used by downstream integrations.  ``min_eig_inverted`` is the smallest
    eigenvalue of R + 4 sum_k C^k Y C^k observed along the sweep.
    """

    times: np.ndarray
    Y: np.ndarray              # (N+1, n, n)
    hat: bool
    min_eig_inverted: float
    times4: np.ndarray
    Y4: np.ndarray             # (4N+1, n, n)


@dataclass(frozen=True)
class FeedbackGain:
    """Feedback matrix theta on the 4N-step grid with a solver-grid view."""

    times4: np.ndarray
    values4: np.ndarray        # (4N+1, n, n)

    @property
    def values(self) -> np.ndarray:
        return self.values4[::4]

    @property
    def times(self) -> np.ndarray:
        return self.times4[::4]


@dataclass(frozen=True)
class TargetSolution:
    """Target-induced quantities: psi, theta0, the extra cost V0, and theta_hat."""

    times: np.ndarray
    psi: np.ndarray            # (N+1, n)
    theta0: np.ndarray         # (N+1, n)
    V0: float
    theta_hat: FeedbackGain
    times2: np.ndarray
    psi2: np.ndarray           # (2N+1, n)
    theta0_2: np.ndarray       # (2N+1, n)


def _sum_cyc(ck: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = ck[0] @ y @ ck[0]
    for k in range(1, ck.shape[0]):
        out = out + ck[k] @ y @ ck[k]
    return out


def _inverted_block(coeffs: CoefficientSet, j8: int, y: np.ndarray) -> np.ndarray:
    return coeffs.dense_R[j8] + 4.0 * _sum_cyc(coeffs.dense_Ck[:, j8], y)


def _plain_driver(coeffs: CoefficientSet, j8: int, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = coeffs.dense_A[j8]
    b = coeffs.dense_B[j8]
    q = coeffs.dense_Q[j8]
    r = coeffs.dense_R[j8]
    cyc = _sum_cyc(coeffs.dense_Ck[:, j8], y)
    block = r + 4.0 * cyc
    rhs = b.T @ y - q - 2.0 * cyc
    g = y @ a + a @ y + q + cyc - rhs.T @ np.linalg.solve(block, rhs)
    return g, block


def _hat_driver(
    coeffs: CoefficientSet, f_path: FPath, j8: int, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    a = coeffs.dense_A[j8]
    b = coeffs.dense_B[j8]
    q = coeffs.dense_Q[j8]
    r = coeffs.dense_R[j8]
    f = f_path.dense[j8]
    eye = np.eye(y.shape[0])
    abf = a + b @ f
    i2f = eye - 2.0 * f
    cyc = _sum_cyc(coeffs.dense_Ck[:, j8], y)
    block = r + 4.0 * cyc
    rhs = b.T @ y - 2.0 * cyc @ i2f
    g = (
        y @ abf
        + abf.T @ y
        + q @ (eye - f)
        + i2f.T @ cyc @ i2f
        - rhs.T @ np.linalg.solve(block, rhs)
    )
    return g, block


def _backward_sweep(coeffs: CoefficientSet, driver, hat: bool) -> RiccatiSolution:
    spec = coeffs.spec
    n = spec.n
    steps4 = 4 * spec.grid_steps
    times4 = np.linspace(0.0, spec.T, steps4 + 1)
    h = spec.T / steps4
    y4 = np.empty((steps4 + 1, n, n))
    y4[steps4] = 0.5 * np.eye(n)

    min_eig = np.inf

    def node_check(j4: int, y: np.ndarray) -> None:
        nonlocal min_eig
        block = _inverted_block(coeffs, 2 * j4, y)
        eig = float(np.linalg.eigvalsh(sym(block)).min())
        min_eig = min(min_eig, eig)
        if eig < EPS_PD:
            raise SingularDriverError(
                f"R + 4 sum C Y C lost definiteness at t={times4[j4]:.6g} "
                f"(min eig {eig:.3e} < {EPS_PD}); convexity assumption violated",
                time=float(times4[j4]),
            )

    node_check(steps4, y4[steps4])
    for j4 in range(steps4, 0, -1):
        j8 = 2 * j4
        y = y4[j4]
        try:
            g1, _ = driver(coeffs, j8, y)
            g2, _ = driver(coeffs, j8 - 1, y + 0.5 * h * g1)
            g3, _ = driver(coeffs, j8 - 1, y + 0.5 * h * g2)
            g4, _ = driver(coeffs, j8 - 2, y + h * g3)
        except np.linalg.LinAlgError as exc:
            raise SingularDriverError(
                f"inverted block singular near t={times4[j4]:.6g}",
                time=float(times4[j4]),
            ) from exc
        nxt = y + h / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
        drift = float(np.max(np.abs(nxt - nxt.T)))
        if drift > SYM_DRIFT_TOL:
            raise NumericDomainError(
                f"Riccati symmetry drift {drift:.2e} at t={times4[j4 - 1]:.6g}"
            )
        y4[j4 - 1] = sym(nxt)
        node_check(j4 - 1, y4[j4 - 1])

    return RiccatiSolution(
        times=spec.times,
        Y=y4[::4].copy(),
        hat=hat,
        min_eig_inverted=min_eig,
        times4=times4,
        Y4=y4,
    )


def solve_riccati(coeffs: CoefficientSet) -> RiccatiSolution:
    """Solve the backward Riccati equation of the zero-target problem."""
    return _backward_sweep(coeffs, _plain_driver, hat=False)


def solve_riccati_hat(coeffs: CoefficientSet, f_path: FPath) -> RiccatiSolution:
    """Solve the cross-term-free backward Riccati equation given F with R F = Q."""
    driver = lambda c, j8, y: _hat_driver(c, f_path, j8, y)
    return _backward_sweep(coeffs, driver, hat=True)


def theta(coeffs: CoefficientSet, sol: RiccatiSolution) -> FeedbackGain:
    """Feedback gain theta = -(R + 4 sum C Y C)^{-1} (B^T Y - Q - 2 sum C Y C)."""
    if sol.hat:
        raise ShapeError("theta expects the plain Riccati solution; use theta_hat")
    steps4 = len(sol.times4) - 1
    vals = np.empty_like(sol.Y4)
    for j4 in range(steps4 + 1):
        j8 = 2 * j4
        y = sol.Y4[j4]
        cyc = _sum_cyc(coeffs.dense_Ck[:, j8], y)
        block = coeffs.dense_R[j8] + 4.0 * cyc
        rhs = coeffs.dense_B[j8].T @ y - coeffs.dense_Q[j8] - 2.0 * cyc
        vals[j4] = -np.linalg.solve(block, rhs)
    return FeedbackGain(times4=sol.times4, values4=vals)


def theta_hat(coeffs: CoefficientSet, f_path: FPath, sol: RiccatiSolution) -> FeedbackGain:
    """Feedback gain of the transformed problem (driver pieces carry F)."""
    if not sol.hat:
        raise ShapeError("theta_hat expects the hat Riccati solution")
    n = coeffs.n
    eye = np.eye(n)
    steps4 = len(sol.times4) - 1
    vals = np.empty_like(sol.Y4)
    for j4 in range(steps4 + 1):
        j8 = 2 * j4
        y = sol.Y4[j4]
        cyc = _sum_cyc(coeffs.dense_Ck[:, j8], y)
        block = coeffs.dense_R[j8] + 4.0 * cyc
        rhs = coeffs.dense_B[j8].T @ y - 2.0 * cyc @ (eye - 2.0 * f_path.dense[j8])
        vals[j4] = -np.linalg.solve(block, rhs)
    return FeedbackGain(times4=sol.times4, values4=vals)


def solve_targets(
    spec: MarketSpec,
    coeffs: CoefficientSet,
    f_path: FPath,
    yhat: RiccatiSolution,
    gain_hat: FeedbackGain,
) -> TargetSolution:
    """Backward linear solve for psi, the affine gain theta0, and the cost offset V0.

    Deterministic terminal/running targets only; with stochastic impact the
    scaled targets gamma^{1/2} xi, gamma^{1/2} zeta would be random.
    """
    n = spec.n
    sigma_nonzero = bool(np.any(coeffs.table.sigma != 0.0))
    zeta_zero = not np.any(coeffs.table.zeta != 0.0)
    xi_zero = not np.any(spec.xi != 0.0)
    if sigma_nonzero and not (zeta_zero and xi_zero):
        raise UnsupportedScopeError(
            "general targets with stochastic impact are out of scope "
            "(gamma^{1/2}-scaled targets would be random)"
        )

    steps2 = 2 * spec.grid_steps
    times2 = np.linspace(0.0, spec.T, steps2 + 1)
    h = spec.T / steps2
    eye = np.eye(n)

    # stage data on the 4N grid
    steps4 = len(yhat.times4) - 1
    ghalf_dense = coeffs.gamma_half_dense(0.5)       # level-8
    gz4 = np.empty((steps4 + 1, n))
    a_t4 = np.empty((steps4 + 1, n, n))
    force4 = np.empty((steps4 + 1, n))
    blocks4 = np.empty((steps4 + 1, n, n))
    bt_4 = np.empty((steps4 + 1, n, n))
    cff4 = np.empty((steps4 + 1, n))                 # 4 sum C Y C F gamma^{1/2} zeta
    for j4 in range(steps4 + 1):
        j8 = 2 * j4
        y = yhat.Y4[j4]
        f = f_path.dense[j8]
        th = gain_hat.values4[j4]
        a = coeffs.dense_A[j8]
        b = coeffs.dense_B[j8]
        q = coeffs.dense_Q[j8]
        gz = ghalf_dense[j8] @ coeffs.table.zeta[j8]
        cyc = _sum_cyc(coeffs.dense_Ck[:, j8], y)
        gz4[j4] = gz
        a_t4[j4] = (a + b @ (f + th)).T
        cff4[j4] = 4.0 * (cyc @ (f @ gz))
        force4[j4] = (
            0.5 * (eye - 2.0 * (f + th)).T @ cff4[j4]
            - q @ ((eye - f) @ gz)
            - y @ (b @ (f @ gz))
        )
        blocks4[j4] = coeffs.dense_R[j8] + 4.0 * cyc
        bt_4[j4] = b.T

    psi2 = np.empty((steps2 + 1, n))
    g_half_T = ghalf_dense[-1]
    psi2[steps2] = -0.5 * g_half_T @ spec.xi
    for j2 in range(steps2, 0, -1):
        j4 = 2 * j2
        p = psi2[j2]
        k1 = a_t4[j4] @ p + force4[j4]
        k2 = a_t4[j4 - 1] @ (p + 0.5 * h * k1) + force4[j4 - 1]
        k3 = a_t4[j4 - 1] @ (p + 0.5 * h * k2) + force4[j4 - 1]
        k4 = a_t4[j4 - 2] @ (p + h * k3) + force4[j4 - 2]
        psi2[j2 - 1] = p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    theta0_2 = np.empty((steps2 + 1, n))
    for j2 in range(steps2 + 1):
        j4 = 2 * j2
        rhs = bt_4[j4] @ psi2[j2] - cff4[j4]
        theta0_2[j2] = -np.linalg.solve(blocks4[j4], rhs)

    # V0 by trapezoid quadrature of the cost-offset terms on the 2N grid
    term_q = np.empty(steps2 + 1)
    term_psi = np.empty(steps2 + 1)
    term_cyc = np.empty(steps2 + 1)
    term_th0 = np.empty(steps2 + 1)
    for j2 in range(steps2 + 1):
        j4 = 2 * j2
        j8 = 4 * j2
        gz = gz4[j4]
        f = f_path.dense[j8]
        q = coeffs.dense_Q[j8]
        fgz = f @ gz
        term_q[j2] = gz @ (q @ ((eye - f) @ gz))
        term_psi[j2] = (coeffs.dense_B[j8] @ fgz) @ psi2[j2]
        y = yhat.Y4[j4]
        acc = 0.0
        for k in range(coeffs.m):
            c = coeffs.dense_Ck[k, j8]
            cfz = c @ fgz
            acc += float(cfz @ y @ cfz)
        term_cyc[j2] = acc
        term_th0[j2] = theta0_2[j2] @ blocks4[j4] @ theta0_2[j2]
    gxi = g_half_T @ spec.xi
    quad = lambda vals: float(_cumquad4(vals, h)[-1])
    v0 = (
        0.5 * float(gxi @ gxi)
        + quad(term_q)
        - 2.0 * quad(term_psi)
        + 4.0 * quad(term_cyc)
        - 0.0  # phi-hat term: zero for deterministic coefficients
        - quad(term_th0)
    )
    return TargetSolution(
        times=spec.times,
        psi=psi2[::2].copy(),
        theta0=theta0_2[::2].copy(),
        V0=v0,
        theta_hat=gain_hat,
        times2=times2,
        psi2=psi2,
        theta0_2=theta0_2,
    )


def ow_closed_form(b_mat: np.ndarray, r_mat: np.ndarray, horizon: float, grid_steps: int) -> RiccatiSolution:
    """Closed-form Riccati solution for constant B, positive definite R.

    Y(s) = 1/2 (I + 1/2 (T - s) B R^{-1} B^T)^{-1}.
    """
    b_mat = np.asarray(b_mat, dtype=float)
    r_mat = np.asarray(r_mat, dtype=float)
    n = b_mat.shape[0]
    if float(np.linalg.eigvalsh(sym(r_mat)).min()) <= 0.0:
        raise NumericDomainError("closed form needs positive definite R")
    brb = b_mat @ np.linalg.solve(r_mat, b_mat.T)
    steps4 = 4 * grid_steps
    times4 = np.linspace(0.0, horizon, steps4 + 1)
    y4 = np.empty((steps4 + 1, n, n))
    eye = np.eye(n)
    for j, s in enumerate(times4):
        mat = eye + 0.5 * (horizon - s) * brb
        if abs(np.linalg.det(mat)) < 1e-14:
            raise NumericDomainError(f"I + (T-s)/2 B R^-1 B^T singular at s={s:.6g}")
        y4[j] = sym(0.5 * np.linalg.inv(mat))
    min_eig = float(np.linalg.eigvalsh(sym(r_mat)).min())
    return RiccatiSolution(
        times=times4[::4].copy(),
        Y=y4[::4].copy(),
        hat=False,
        min_eig_inverted=min_eig,
        times4=times4,
        Y4=y4,
    )
