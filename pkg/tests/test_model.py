import numpy as np
import pytest

import crossexec as cx
from crossexec import presets
from crossexec.model import deterministic_lambda


def test_gamma_power_diagonal_sqrt():
    spec = cx.MarketSpec(
        n=2, m=1, T=1.0, O=np.eye(2), lambda0=np.array([4.0, 9.0]),
        mu=np.zeros(2), sigma=np.zeros((2, 1)), rho=np.zeros((2, 2)),
        Xi=np.zeros((2, 2)), xi=np.zeros(2), zeta=np.zeros(2),
        x0=np.zeros(2), d0=np.zeros(2), grid_steps=10,
    )
    half = cx.gamma_power(spec, 0.3, alpha=0.5)
    assert np.allclose(half, np.diag([2.0, 3.0]), atol=1e-14)


def test_gamma_power_alpha_zero_is_identity(conley_spec):
    for t in (0.0, 0.4, 1.0):
        assert np.allclose(cx.gamma_power(conley_spec, t, alpha=0.0), np.eye(2), atol=1e-13)


def test_gamma_power_rotated_frame_growing_impact():
    # frame O = [[3,4],[-4,3]]/5 with eigenvalues (e^{3s}, e^{s}):
    # entry (1,1) of gamma is (9 e^{3s} + 16 e^{s})/25
    spec = presets.impact_spec(grid_steps=16)
    for s in (0.0, 0.25, 0.5, 1.0):
        g = cx.gamma_power(spec, s, alpha=1.0)
        expected_11 = (9.0 * np.exp(3.0 * s) + 16.0 * np.exp(s)) / 25.0
        expected_off = 12.0 * (np.exp(3.0 * s) - np.exp(s)) / 25.0
        assert g[0, 0] == pytest.approx(expected_11, abs=1e-10)
        assert g[0, 1] == pytest.approx(expected_off, abs=1e-10)


@pytest.mark.parametrize("alpha,beta", [(0.5, 0.5), (1.0, -1.0), (0.25, -0.75), (2.0, -0.5)])
def test_gamma_power_group_property(conley_spec, alpha, beta):
    for t in conley_spec.times[:: len(conley_spec.times) // 4]:
        a = cx.gamma_power(conley_spec, t, alpha=alpha)
        b = cx.gamma_power(conley_spec, t, alpha=beta)
        ab = cx.gamma_power(conley_spec, t, alpha=alpha + beta)
        assert np.max(np.abs(a @ b - ab)) < 1e-10


def test_gamma_power_positive_definite(conley_spec):
    g = cx.gamma_power(conley_spec, 0.7, alpha=1.0)
    eigs = np.linalg.eigvalsh(g)
    assert np.min(eigs) > 0.0
    assert np.allclose(np.sort(eigs), np.sort(conley_spec.lambda0), atol=1e-12)


def test_gamma_power_requires_path_for_stochastic_spec():
    spec = presets.impact_spec(sigma_vec=(1.0, 1.0), grid_steps=16)
    with pytest.raises(cx.UnsupportedScopeError):
        cx.gamma_power(spec, 0.5, alpha=1.0)
    lam = cx.LambdaPath(times=spec.times, values=np.ones((17, 2)))
    assert np.allclose(cx.gamma_power(spec, 0.5, lambda_path=lam), np.eye(2), atol=1e-14)


def test_ow_reduction_b_and_kappa(ow_commuting_spec, request):
    # symmetric rho commuting with gamma: B = -rho and kappa = rho
    coeffs = cx.derive_coefficients(ow_commuting_spec)
    rho = 2.0 * np.eye(2)
    assert np.max(np.abs(coeffs.B + rho)) < 1e-12
    assert np.max(np.abs(coeffs.kappa - rho)) < 1e-12


def test_kappa_matches_direct_oracle_blowup_matrices():
    spec = presets.blowup_spec(grid_steps=16)
    coeffs = cx.derive_coefficients(spec)
    gamma = np.array([[2.0, 1.0], [1.0, 1.0]])
    rho = np.array([[1.0, 2.0], [2.0, 5.0]])
    prod = rho @ gamma + gamma @ rho.T
    assert np.allclose(prod, [[8.0, 12.0], [12.0, 14.0]], atol=1e-12)
    lam, vecs = np.linalg.eigh(gamma)
    g_mhalf = vecs @ np.diag(lam ** -0.5) @ vecs.T
    kappa_oracle = 0.5 * g_mhalf @ prod @ g_mhalf
    assert np.max(np.abs(coeffs.kappa[0] - kappa_oracle)) < 1e-10
    assert np.max(np.abs(coeffs.kappa[-1] - kappa_oracle)) < 1e-10


def test_zero_inputs_give_zero_coefficients():
    spec = presets.ow_spec(np.eye(2), np.zeros((2, 2)), 1.0, x0=[1.0, 0.0], grid_steps=10)
    coeffs = cx.derive_coefficients(spec)
    for path in (coeffs.A, coeffs.B, coeffs.kappa):
        assert np.max(np.abs(path)) == 0.0
    assert np.max(np.abs(coeffs.R - coeffs.Q)) == 0.0


def test_coefficient_symmetry_and_r_identity(conley_coeffs):
    for path in (conley_coeffs.A, conley_coeffs.Q, conley_coeffs.kappa, conley_coeffs.R):
        assert np.max(np.abs(path - np.swapaxes(path, 1, 2))) <= 1e-10
    assert np.max(np.abs(conley_coeffs.R - conley_coeffs.Q - conley_coeffs.kappa)) == 0.0


def test_derive_coefficients_deterministic(conley_spec):
    a = cx.derive_coefficients(conley_spec)
    b = cx.derive_coefficients(conley_spec)
    assert np.array_equal(a.B, b.B)
    assert np.array_equal(a.R, b.R)
    assert np.array_equal(a.table.lam_det, b.table.lam_det)


def test_stochastic_sigma_with_risk_rejected():
    spec = presets.impact_spec(sigma_vec=(1.0, 1.0), grid_steps=16)
    bad = cx.MarketSpec(
        n=2, m=1, T=1.0, O=spec.O, lambda0=spec.lambda0, mu=spec.mu,
        sigma=spec.sigma, rho=spec.rho, Xi=0.1 * np.eye(2),
        xi=np.zeros(2), zeta=np.zeros(2), x0=spec.x0, d0=spec.d0, grid_steps=16,
    )
    with pytest.raises(cx.UnsupportedScopeError):
        cx.derive_coefficients(bad)


def test_stochastic_sigma_with_coupling_and_unequal_rows_rejected():
    # resilience couples the eigenvalues but their volatility rows differ
    o = presets.IMPACT_FRAME
    spec = cx.MarketSpec(
        n=2, m=1, T=1.0, O=o, lambda0=np.ones(2), mu=np.array([3.0, 1.0]),
        sigma=np.array([[1.0], [0.5]]), rho=o.T @ np.array([[1.0, 0.3], [0.3, 1.0]]) @ o,
        Xi=np.zeros((2, 2)), xi=np.zeros(2), zeta=np.zeros(2),
        x0=np.array([1.0, 0.0]), d0=np.zeros(2), grid_steps=16,
    )
    with pytest.raises(cx.UnsupportedScopeError):
        cx.derive_coefficients(spec)


def test_deterministic_lambda_exponential_drift():
    spec = presets.impact_spec(grid_steps=32)
    lam = deterministic_lambda(spec, 0.5)
    assert lam[0] == pytest.approx(np.exp(1.5), rel=1e-12)
    assert lam[1] == pytest.approx(np.exp(0.5), rel=1e-12)


def test_choose_f_zero_risk(conley_spec, conley_coeffs):
    f_path = cx.choose_F(conley_spec, conley_coeffs)
    assert np.max(np.abs(f_path.values)) == 0.0


def test_choose_f_scalar():
    spec = cx.MarketSpec(
        n=1, m=1, T=1.0, O=np.eye(1), lambda0=np.ones(1), mu=np.zeros(1),
        sigma=np.zeros((1, 1)), rho=np.ones((1, 1)), Xi=np.ones((1, 1)),
        xi=np.zeros(1), zeta=np.zeros(1), x0=np.ones(1), d0=np.zeros(1), grid_steps=10,
    )
    coeffs = cx.derive_coefficients(spec)
    # Q = 1, kappa = 1, R = 2 -> F = 1/2
    f_path = cx.choose_F(spec, coeffs)
    assert np.allclose(f_path.values, 0.5, atol=1e-12)


def test_choose_f_risk_setting_linear_solve_oracle(risk_spec_small):
    coeffs = cx.derive_coefficients(risk_spec_small)
    f_path = cx.choose_F(risk_spec_small, coeffs)
    q = np.array([[1.0, 0.5], [0.5, 1.0]])
    oracle = np.linalg.solve(q + 3.0 * np.eye(2), q)
    assert np.max(np.abs(f_path.values[0] - oracle)) < 1e-12
    # product identity on the whole grid
    prod = np.einsum("tij,tjk->tik", coeffs.R, f_path.values)
    assert np.max(np.abs(prod - coeffs.Q)) < 1e-10


def test_choose_f_singular_r_reports_time():
    spec = presets.blowup_spec(grid_steps=16)
    # attach a non-zero risk so Q != 0 while R stays indefinite
    bad = cx.MarketSpec(
        n=2, m=1, T=spec.T, O=spec.O, lambda0=spec.lambda0, mu=spec.mu,
        sigma=spec.sigma, rho=spec.rho, Xi=0.01 * np.eye(2),
        xi=spec.xi, zeta=spec.zeta, x0=spec.x0, d0=spec.d0, grid_steps=16,
    )
    coeffs = cx.derive_coefficients(bad)
    with pytest.raises(cx.NoValidFError) as err:
        cx.choose_F(bad, coeffs)
    assert err.value.time is not None


def test_spec_validation_errors():
    with pytest.raises(cx.NumericDomainError):
        cx.MarketSpec(
            n=2, m=1, T=1.0, O=np.array([[1.0, 0.1], [0.0, 1.0]]), lambda0=np.ones(2),
            mu=np.zeros(2), sigma=np.zeros((2, 1)), rho=np.zeros((2, 2)),
            Xi=np.zeros((2, 2)), xi=np.zeros(2), zeta=np.zeros(2),
            x0=np.zeros(2), d0=np.zeros(2), grid_steps=10,
        )
    with pytest.raises(cx.NumericDomainError):
        presets.ow_spec(np.eye(2), np.zeros((2, 2)), -1.0, x0=[0.0, 0.0])
    with pytest.raises(cx.ShapeError):
        presets.ow_spec(np.eye(2), np.zeros((2, 2)), 1.0, x0=[0.0, 0.0], grid_steps=1)
    with pytest.raises(cx.NumericDomainError):
        cx.MarketSpec(
            n=2, m=1, T=1.0, O=np.eye(2), lambda0=np.array([1.0, -1.0]),
            mu=np.zeros(2), sigma=np.zeros((2, 1)), rho=np.zeros((2, 2)),
            Xi=np.zeros((2, 2)), xi=np.zeros(2), zeta=np.zeros(2),
            x0=np.zeros(2), d0=np.zeros(2), grid_steps=10,
        )
    with pytest.raises(cx.NumericDomainError):
        cx.MarketSpec(
            n=2, m=1, T=1.0, O=np.eye(2), lambda0=np.ones(2),
            mu=np.zeros(2), sigma=np.zeros((2, 1)), rho=np.zeros((2, 2)),
            Xi=np.array([[0.0, 0.5], [0.0, 0.0]]), xi=np.zeros(2), zeta=np.zeros(2),
            x0=np.zeros(2), d0=np.zeros(2), grid_steps=10,
        )
