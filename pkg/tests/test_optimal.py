import numpy as np
import pytest

import crossexec as cx
from crossexec import presets
from tests.conftest import make_rho0_spec


def perturb_cost(spec, coeffs, plan):
    return cx.pathwise_cost(spec, coeffs, plan) + cx.risk_cost(spec, plan)


def block_bump(rng, steps, n):
    """Unit-norm piecewise-constant bump on a random interior block of nodes."""
    width = int(rng.integers(1, 9))
    start = int(rng.integers(1, steps - width))
    direction = np.zeros((steps, n))
    direction[start:start + width] = rng.normal(size=n)
    return direction / np.linalg.norm(direction)


class TestOptimalState:
    def test_matched_deviation_keeps_state_at_zero(self):
        gamma = np.array([[2.0, 1.0], [1.0, 1.0]])
        x = np.array([3.0, -1.0])
        spec = presets.ow_spec(gamma, [[3.0, 2.0], [2.0, 5.0]], 1.0, x0=x,
                               d0=gamma @ x, grid_steps=64)
        coeffs = cx.derive_coefficients(spec)
        sol = cx.solve_riccati(coeffs)
        state = cx.optimal_state(spec, coeffs, cx.theta(coeffs, sol))
        assert np.max(np.abs(state.values)) < 1e-12

    def test_constant_coefficient_state_is_affine(self, conley_spec, conley_coeffs):
        sol = cx.solve_riccati(conley_coeffs)
        state = cx.optimal_state(conley_spec, conley_coeffs, cx.theta(conley_coeffs, sol))
        b_mat, r_mat = conley_coeffs.B[0], conley_coeffs.R[0]
        brb = b_mat @ np.linalg.solve(r_mat, b_mat.T)
        slope = -0.5 * brb @ np.linalg.solve(
            np.eye(2) + 0.5 * conley_spec.T * brb, state.values[0]
        )
        for i, s in enumerate(state.times):
            expected = state.values[0] + slope * s
            assert np.max(np.abs(state.values[i] - expected)) < 1e-9

    def test_fourth_order_step_halving(self):
        states = {}
        for n_grid in (50, 100, 200):
            spec = presets.impact_spec(grid_steps=n_grid)
            coeffs = cx.derive_coefficients(spec)
            sol = cx.solve_riccati(coeffs)
            states[n_grid] = cx.optimal_state(spec, coeffs, cx.theta(coeffs, sol))
        gap_coarse = np.max(np.abs(states[50].values - states[100].values[::2]))
        gap_fine = np.max(np.abs(states[100].values - states[200].values[::2]))
        assert gap_coarse / gap_fine >= 8.0

    def test_stochastic_state_needs_increments(self):
        spec = presets.impact_spec(sigma_vec=(1.0, 1.0), grid_steps=32)
        coeffs = cx.derive_coefficients(spec)
        sol = cx.solve_riccati(coeffs)
        with pytest.raises(cx.ConfigurationError):
            cx.optimal_state(spec, coeffs, cx.theta(coeffs, sol))


class TestOptimalStrategy:
    def test_zero_resilience_immediate_close(self):
        spec = make_rho0_spec(grid_steps=64)
        opt = cx.solve_execution(spec)
        assert np.max(np.abs(opt.plan.values)) < 1e-8
        assert np.array_equal(opt.plan.terminal, np.zeros(2))

    def test_crossing_zero_reproduction(self):
        spec = presets.crossing_zero_spec(rho3=-1.0, grid_steps=200)
        opt = cx.solve_execution(spec)
        assert opt.plan.values[0, 0] == pytest.approx(1100.0 / 15.0, abs=1e-8)
        assert opt.plan.values[0, 1] == pytest.approx(-100.0 / 15.0, abs=1e-8)
        oracle = cx.crossing_zero_oracle(1.0, 100.0, 2.0, 2.0, -1.0, 200)
        assert np.max(np.abs(opt.plan.values - oracle.values)) < 1e-7

    def test_commuting_closed_form_strategy(self, ow_commuting_spec):
        opt = cx.solve_execution(ow_commuting_spec)
        rho = 2.0 * np.eye(2)
        horizon = ow_commuting_spec.T
        core = np.linalg.solve(2.0 * np.eye(2) + horizon * rho, ow_commuting_spec.x0)
        for i, s in enumerate(ow_commuting_spec.times[:-1]):
            expected = (np.eye(2) + (horizon - s) * rho) @ core
            assert np.max(np.abs(opt.plan.values[i] - expected)) < 1e-9

    def test_feedback_deviation_consistent_with_plan_deviation(self, conley_spec, conley_coeffs):
        opt = cx.solve_execution(conley_spec)
        dev = cx.deviation_of_plan(conley_spec, conley_coeffs, opt.plan)
        gap = np.max(np.abs(dev.values - opt.deviation.values))
        assert gap < 60.0 * conley_spec.dt

    def test_sign_flip_symmetry(self, conley_spec):
        opt = cx.solve_execution(conley_spec)
        flipped_spec = cx.MarketSpec(
            n=2, m=1, T=conley_spec.T, O=conley_spec.O, lambda0=conley_spec.lambda0,
            mu=conley_spec.mu, sigma=conley_spec.sigma, rho=conley_spec.rho,
            Xi=conley_spec.Xi, xi=conley_spec.xi, zeta=conley_spec.zeta,
            x0=-conley_spec.x0, d0=-conley_spec.d0, grid_steps=conley_spec.grid_steps,
        )
        flipped = cx.solve_execution(flipped_spec)
        assert np.array_equal(flipped.plan.values, -opt.plan.values)
        assert np.array_equal(flipped.deviation.values, -opt.deviation.values)

    def test_constant_deviation_laws(self):
        # constant-impact case and growing-impact eigenframe case
        ow = presets.conley_pass_spec(grid_steps=400)
        opt_ow = cx.solve_execution(ow)
        var_ow = np.max(np.abs(opt_ow.deviation.values[1:] - opt_ow.deviation.values[1]))
        assert var_ow <= 1e-6

        imp = presets.impact_spec(grid_steps=400)
        opt_imp = cx.solve_execution(imp)
        var_imp = np.max(np.abs(opt_imp.deviation.values[1:] - opt_imp.deviation.values[1]))
        assert var_imp <= 1e-6


class TestOptimalCost:
    def test_commuting_cost_formula(self):
        spec = presets.simple_resilience_spec(grid_steps=500)
        sol = cx.solve_riccati(cx.derive_coefficients(spec))
        cost = cx.optimal_cost(spec, sol)
        x = spec.x0
        expected = (2.0 * x[0] ** 2 + 2.0 * x[0] * x[1] + x[1] ** 2) / 4.0
        assert cost == pytest.approx(expected, abs=1e-9)

    def test_immediate_close_cost(self):
        gamma = np.array([[2.0, 1.0], [1.0, 1.0]])
        x = np.array([3.0, -1.0])
        spec = presets.ow_spec(gamma, [[3.0, 2.0], [2.0, 5.0]], 1.0, x0=x,
                               d0=gamma @ x, grid_steps=64)
        sol = cx.solve_riccati(cx.derive_coefficients(spec))
        assert cx.optimal_cost(spec, sol) == pytest.approx(-0.5 * x @ gamma @ x, abs=1e-9)

    def test_flat_start_zero_cost(self):
        spec = presets.ow_spec(np.eye(2), 2.0 * np.eye(2), 1.0, x0=[0.0, 0.0], grid_steps=32)
        sol = cx.solve_riccati(cx.derive_coefficients(spec))
        assert cx.optimal_cost(spec, sol) == 0.0

    def test_terminal_target_shift_identity(self):
        # with zero risk the cost only sees x - xi
        gamma = np.array([[2.0, 1.0], [1.0, 1.0]])
        o, lam0 = cx.frame_from_matrix(gamma)
        spec = cx.MarketSpec(
            n=2, m=1, T=1.0, O=o, lambda0=lam0, mu=np.zeros(2), sigma=np.zeros((2, 1)),
            rho=2.0 * np.eye(2), Xi=np.zeros((2, 2)), xi=np.array([5.0, -3.0]),
            zeta=np.zeros(2), x0=np.array([10.0, 4.0]), d0=np.zeros(2), grid_steps=200,
        )
        opt = cx.solve_execution(spec)
        shift = spec.x0 - spec.xi
        assert opt.cost == pytest.approx(shift @ gamma @ shift / 4.0, abs=1e-9)
        assert opt.mode == "general-target"


class TestCrossingZeroOracle:
    def test_decoupled_assets_stay_flat(self):
        plan = cx.crossing_zero_oracle(1.0, 100.0, 2.0, 2.0, 0.0, 50)
        assert np.max(np.abs(plan.values[:, 1])) == 0.0

    def test_sign_change_at_half_horizon(self):
        plan = cx.crossing_zero_oracle(1.0, 100.0, 2.0, 2.0, -1.0, 100)
        x2 = plan.values[:, 1]
        times = np.linspace(0.0, 1.0, 101)[:-1]
        t_cross = times[np.argmin(np.abs(x2))]
        assert abs(t_cross - 0.5) <= 1.0 / 100.0
        assert x2[0] < 0.0 < x2[-1]

    def test_first_asset_independent_of_coupling_sign(self):
        plus = cx.crossing_zero_oracle(1.0, 100.0, 2.0, 2.0, 1.0, 50)
        minus = cx.crossing_zero_oracle(1.0, 100.0, 2.0, 2.0, -1.0, 50)
        assert np.array_equal(plus.values[:, 0], minus.values[:, 0])
        assert np.array_equal(plus.values[:, 1], -minus.values[:, 1])

    def test_indefinite_resilience_rejected(self):
        with pytest.raises(cx.NumericDomainError):
            cx.crossing_zero_oracle(1.0, 100.0, 1.0, 1.0, 1.5, 50)


class TestOptimality:
    @pytest.mark.parametrize("case", ["ow", "risk", "general"])
    def test_stationarity_and_dominance(self, case):
        if case == "ow":
            spec = presets.ow_spec([[2.0, 1.0], [1.0, 1.0]], [[3.0, 2.0], [2.0, 5.0]],
                                   1.0, x0=[0.25, -0.125], grid_steps=500)
        elif case == "risk":
            spec = presets.risk_spec(x0=(0.4, 0.0), grid_steps=500)
        else:
            zeta = lambda t: np.array([0.2 * (1.0 - t), 0.1 * t])
            spec = presets.risk_spec(x0=(0.4, 0.0), xi=(0.1, -0.05), zeta=zeta, grid_steps=500)
        coeffs = cx.derive_coefficients(spec)
        opt = cx.solve_execution(spec, coeffs=coeffs)
        base = perturb_cost(spec, coeffs, opt.plan)
        rng = np.random.default_rng(17)
        worst_grad = 0.0
        eps_fd = 1e-4
        for _ in range(10):
            direction = block_bump(rng, spec.grid_steps, spec.n)
            up = perturb_cost(spec, coeffs, cx.ExecutionPlan(
                opt.plan.x_pre, opt.plan.values + eps_fd * direction, opt.plan.terminal))
            dn = perturb_cost(spec, coeffs, cx.ExecutionPlan(
                opt.plan.x_pre, opt.plan.values - eps_fd * direction, opt.plan.terminal))
            worst_grad = max(worst_grad, abs(up - dn) / (2.0 * eps_fd))
            for eps in (1e-2, 1e-3):
                bumped = perturb_cost(spec, coeffs, cx.ExecutionPlan(
                    opt.plan.x_pre, opt.plan.values + eps * direction, opt.plan.terminal))
                assert bumped >= base - 1e-12
        assert worst_grad <= 1e-4
