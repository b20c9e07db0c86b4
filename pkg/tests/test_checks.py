import numpy as np
import pytest

import crossexec as cx
from crossexec import presets
from crossexec.checks import FAIL, INDEFINITE, NOT_APPLICABLE, PASS, PD, PSD


GAMMA_51 = np.array([[2.0, 1.0], [1.0, 1.0]])
RHO_51 = np.array([[1.0, 2.0], [2.0, 5.0]])
RHO_54 = np.array([[3.0, 2.0], [2.0, 5.0]])


class TestKappaDefiniteness:
    def test_blowup_matrices_indefinite(self):
        coeffs = cx.derive_coefficients(presets.blowup_spec(grid_steps=16))
        kind, min_eig = cx.kappa_definiteness(coeffs)
        assert kind == INDEFINITE
        assert min_eig < -1e-10
        # determinant of rho gamma + gamma rho^T is negative
        prod = RHO_51 @ GAMMA_51 + GAMMA_51 @ RHO_51.T
        assert np.linalg.det(prod) == pytest.approx(-32.0, abs=1e-10)

    def test_commuting_pd_case(self, ow_commuting_spec):
        coeffs = cx.derive_coefficients(ow_commuting_spec)
        kind, min_eig = cx.kappa_definiteness(coeffs)
        assert kind == PD
        assert min_eig == pytest.approx(2.0, abs=1e-10)

    def test_zero_kappa_is_psd(self):
        spec = presets.ow_spec(np.eye(2), np.zeros((2, 2)), 1.0, x0=[1.0, 0.0], grid_steps=16)
        coeffs = cx.derive_coefficients(spec)
        kind, min_eig = cx.kappa_definiteness(coeffs)
        assert kind == PSD
        assert min_eig == 0.0

    def test_agrees_with_direct_eigen_scan(self, conley_coeffs):
        kind, min_eig = cx.kappa_definiteness(conley_coeffs)
        direct = min(
            np.linalg.eigvalsh(0.5 * (k + k.T)).min() for k in conley_coeffs.kappa
        )
        assert min_eig == pytest.approx(direct, abs=1e-14)
        assert kind == PD


class TestConley:
    def test_true_on_conley_example(self):
        result = cx.conley(RHO_54, GAMMA_51)
        assert result
        assert result.product == pytest.approx(1.4242667180081465, abs=1e-10)

    def test_identity_resilience_always_passes(self):
        for gamma in (GAMMA_51, np.diag([1.0, 100.0])):
            result = cx.conley(np.eye(2), gamma)
            assert result
            assert result.product == 0.0

    def test_false_on_blowup_pair(self):
        result = cx.conley(RHO_51, GAMMA_51)
        assert not result
        assert result.product == pytest.approx(7.812559200041264, abs=1e-9)

    def test_scale_invariance_in_gamma(self):
        base = cx.conley(RHO_54, GAMMA_51).product
        for c in (0.1, 3.0, 250.0):
            assert cx.conley(RHO_54, c * GAMMA_51).product == pytest.approx(base, rel=1e-12)

    def test_rejects_non_pd_inputs(self):
        with pytest.raises(cx.NumericDomainError):
            cx.conley(np.diag([1.0, -1.0]), GAMMA_51)
        with pytest.raises(cx.NumericDomainError):
            cx.conley(np.array([[1.0, 2.0], [0.0, 1.0]]), GAMMA_51)


class TestAssumptionAudit:
    def _by_name(self, report):
        return {c.name: c for c in report.checks}

    def test_impact_frame_spec_passes(self):
        spec = presets.impact_spec(grid_steps=32)
        report = cx.assumption_audit(spec, cx.derive_coefficients(spec))
        checks = self._by_name(report)
        assert checks["eigen_resilience_growth"].status == PASS
        assert checks["solvable"].status == PASS
        assert report.passed

    def test_blowup_spec_fails_kappa(self):
        spec = presets.blowup_spec(grid_steps=32)
        report = cx.assumption_audit(spec, cx.derive_coefficients(spec))
        checks = self._by_name(report)
        assert checks["kappa_pd"].status == FAIL
        assert checks["solvable"].status == FAIL
        assert not report.passed

    def test_zero_spec_q_psd_but_r_fails(self):
        spec = presets.ow_spec(np.eye(2), np.zeros((2, 2)), 1.0, x0=[1.0, 0.0], grid_steps=16)
        report = cx.assumption_audit(spec, cx.derive_coefficients(spec))
        checks = self._by_name(report)
        assert checks["Q_psd"].status == PASS
        assert checks["R_uniform_pd"].status == FAIL

    def test_growth_check_not_applicable_off_frame(self, conley_spec, conley_coeffs):
        report = cx.assumption_audit(conley_spec, conley_coeffs)
        checks = self._by_name(report)
        assert checks["eigen_resilience_growth"].status == NOT_APPLICABLE

    def test_deterministic_and_unique_names(self, conley_spec, conley_coeffs):
        a = cx.assumption_audit(conley_spec, conley_coeffs)
        b = cx.assumption_audit(conley_spec, conley_coeffs)
        assert a == b
        names = [c.name for c in a.checks]
        assert len(names) == len(set(names))
