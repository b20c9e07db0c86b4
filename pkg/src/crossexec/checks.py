"""Assumption auditing: definiteness scans and sufficient-condition checks.

These are grid-level diagnostics.  A passing audit means the paper-style
sufficient conditions hold at every grid node; the Riccati solver's
singular-driver error remains the runtime backstop for anything subtler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericDomainError
from .model import CoefficientSet, MarketSpec, sym

DEFINITENESS_TOL = 1e-10

PD = "PD"
PSD = "PSD"
INDEFINITE = "indefinite"

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str
    witness: str = ""


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[CheckResult, ...]

    def __post_init__(self):
        names = [c.name for c in self.checks]
        if len(names) != len(set(names)):
            raise NumericDomainError("audit check registered twice")

    @property
    def hard_failures(self) -> tuple[CheckResult, ...]:
        hard = {"orthogonal_frame", "positive_eigenvalues", "risk_symmetric", "solvable"}
        return tuple(c for c in self.checks if c.name in hard and c.status == FAIL)

    @property
    def passed(self) -> bool:
        return not self.hard_failures

    def lines(self) -> list[str]:
        width = max(len(c.name) for c in self.checks)
        out = []
        for c in self.checks:
            suffix = f"  ({c.witness})" if c.witness else ""
            out.append(f"{c.name:<{width}}  {c.status}{suffix}")
        return out


@dataclass(frozen=True)
class ConleyResult:
    """Sufficient (not necessary) eigenvalue-ratio criterion for kappa PD."""

    satisfied: bool
    product: float

    def __bool__(self) -> bool:
        return self.satisfied


def _grid_min_eig(path: np.ndarray) -> tuple[float, int]:
    eigs = np.linalg.eigvalsh(0.5 * (path + np.swapaxes(path, 1, 2)))
    mins = eigs.min(axis=1)
    idx = int(np.argmin(mins))
    return float(mins[idx]), idx


def kappa_definiteness(coeffs: CoefficientSet) -> tuple[str, float]:
    """Classify kappa over the grid by its infimum eigenvalue."""
    min_eig, _ = _grid_min_eig(coeffs.kappa)
    if min_eig > DEFINITENESS_TOL:
        return PD, min_eig
    if min_eig < -DEFINITENESS_TOL:
        return INDEFINITE, min_eig
    return PSD, min_eig


def conley(rho: np.ndarray, gamma: np.ndarray) -> ConleyResult:
    """Eigenvalue-ratio test: (sqrt(cond gamma)-1)(sqrt(cond rho)-1) < 2.

    True guarantees kappa = (gamma^{-1/2} rho gamma^{1/2} + transpose)/2 is
    positive definite; false is inconclusive.
    """
    rho = np.asarray(rho, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    for name, mat in (("rho", rho), ("gamma", gamma)):
        if np.linalg.norm(mat - mat.T) > 1e-12:
            raise NumericDomainError(f"{name} must be symmetric for the criterion")
        if float(np.linalg.eigvalsh(mat).min()) <= 0.0:
            raise NumericDomainError(f"{name} must be positive definite for the criterion")
    eig_r = np.linalg.eigvalsh(rho)
    eig_g = np.linalg.eigvalsh(gamma)
    product = (np.sqrt(eig_g[-1] / eig_g[0]) - 1.0) * (np.sqrt(eig_r[-1] / eig_r[0]) - 1.0)
    return ConleyResult(satisfied=bool(product < 2.0), product=float(product))


def assumption_audit(spec: MarketSpec, coeffs: CoefficientSet) -> AuditReport:
    """Grid-level audit of the standing assumptions behind the solvers."""
    checks: list[CheckResult] = []
    times = spec.times

    ortho = float(np.linalg.norm(spec.O.T @ spec.O - np.eye(spec.n)))
    checks.append(CheckResult(
        "orthogonal_frame", PASS if ortho <= 1e-12 else FAIL, f"|O^T O - I|={ortho:.2e}"
    ))
    lam_min = float(np.min(spec.lambda0))
    checks.append(CheckResult(
        "positive_eigenvalues", PASS if lam_min > 0.0 else FAIL, f"min lambda0={lam_min:.3g}"
    ))
    xi_asym = max(float(np.linalg.norm(spec.Xi(t) - spec.Xi(t).T)) for t in times)
    checks.append(CheckResult(
        "risk_symmetric", PASS if xi_asym <= 1e-12 else FAIL, f"max |Xi-Xi^T|={xi_asym:.2e}"
    ))

    g_scaled_max = float(np.max(np.abs(coeffs.B + np.einsum(
        "ji,tj,jk->tik", spec.O, np.stack([spec.mu(t) for t in times]), spec.O
    ) - 2.0 * np.einsum("ktij,ktjl->til", coeffs.Ck, coeffs.Ck))))
    bounded = np.isfinite(g_scaled_max)
    checks.append(CheckResult(
        "scaled_resilience_bounded", PASS if bounded else FAIL,
        f"max |gamma^(-1/2) rho gamma^(1/2)|={g_scaled_max:.3g}",
    ))

    q_min, q_idx = _grid_min_eig(coeffs.Q)
    q_psd = q_min >= -DEFINITENESS_TOL
    checks.append(CheckResult(
        "Q_psd", PASS if q_psd else FAIL, f"min eig {q_min:.3e} at t={times[q_idx]:.4g}"
    ))

    r_min, r_idx = _grid_min_eig(coeffs.R)
    r_uniform = r_min > DEFINITENESS_TOL
    checks.append(CheckResult(
        "R_uniform_pd", PASS if r_uniform else FAIL,
        f"min eig {r_min:.3e} at t={times[r_idx]:.4g}",
    ))

    vol_quad = np.stack([np.sum(spec.sigma(t) ** 2, axis=1) for t in times])
    vol_min = float(np.min(vol_quad))
    vol_uniform = vol_min > DEFINITENESS_TOL
    checks.append(CheckResult(
        "vol_uniform_pd", PASS if vol_uniform else FAIL,
        f"min_j sum_k sigma_jk^2 = {vol_min:.3e}",
    ))

    kap_class, kap_min = kappa_definiteness(coeffs)
    checks.append(CheckResult(
        "kappa_pd", PASS if kap_class == PD else FAIL,
        f"{kap_class}, min eig {kap_min:.3e}",
    ))

    xi_zero = all(np.all(spec.Xi(t) == 0.0) for t in times)
    r_psd = r_min >= -DEFINITENESS_TOL
    convex = (
        (q_psd and kap_class == PD)
        or (xi_zero and r_uniform)
        or (xi_zero and r_psd and vol_uniform)
    )
    checks.append(CheckResult(
        "solvable", PASS if convex else FAIL,
        "a sufficient convexity condition holds" if convex
        else "no sufficient convexity condition holds on the grid",
    ))

    # resilience diagonal in the impact eigenframe: growth condition per asset
    rho_frame = np.stack([spec.O @ spec.rho(t) @ spec.O.T for t in times])
    off = rho_frame.copy()
    for j in range(spec.n):
        off[:, j, j] = 0.0
    if float(np.max(np.abs(off))) <= 1e-12:
        margins = np.empty((len(times), spec.n))
        for i, t in enumerate(times):
            margins[i] = 2.0 * np.diagonal(rho_frame[i]) + spec.mu(t) - np.sum(spec.sigma(t) ** 2, axis=1)
        worst = float(np.min(margins))
        checks.append(CheckResult(
            "eigen_resilience_growth", PASS if worst > 0.0 else FAIL,
            f"min_j 2 rho_j + mu_j - sum sigma_jk^2 = {worst:.3g}",
        ))
    else:
        checks.append(CheckResult(
            "eigen_resilience_growth", NOT_APPLICABLE, "resilience not diagonal in the eigenframe"
        ))

    finite = True
    for t in times:
        vals = [spec.mu(t), spec.sigma(t), spec.rho(t), spec.Xi(t), spec.zeta(t)]
        finite = finite and all(np.all(np.isfinite(v)) for v in vals)
    finite = finite and bool(np.all(np.isfinite(spec.xi)))
    checks.append(CheckResult(
        "inputs_finite", PASS if finite else FAIL, ""
    ))

    return AuditReport(checks=tuple(checks))
