"""Tests for the backward PIDE solver and its price surface."""

import math

import numpy as np
import pytest

from impactjd.errors import ModelValidationError, NumericalError
from impactjd.model import ModelParams, Payoff, StrategyClosure, payoff_eval
from impactjd.oracles import BsInputs, black_scholes_price
from impactjd.pide import GridSpec, SolverSettings, first_derivative, reduce_to_liu_yong_check, solve_pide

BS_CALL = 10.450583572185565


class TestGridSpec:
    """Uniform grid with the strike on a node."""

    def test_exact_alignment(self, call):
        """300 / 150 already puts 100 on a node."""
        grid = GridSpec(s_max=300.0, n_space=150, n_time=100)
        assert grid.price_step(call) == 2.0
        assert grid.s_nodes(call)[50] == 100.0

    def test_alignment_moves_boundary_up(self, call):
        """An unaligned s_max grows by less than one step."""
        grid = GridSpec(s_max=310.0, n_space=150, n_time=10)
        ds = grid.price_step(call)
        assert ds == pytest.approx(100.0 / 48)
        nodes = grid.s_nodes(call)
        assert nodes[48] == pytest.approx(100.0)
        assert 310.0 <= nodes[-1] < 310.0 + ds

    def test_without_alignment(self, call):
        """align_strike = false keeps s_max / n_space."""
        grid = GridSpec(s_max=310.0, n_space=155, n_time=10, align_strike=False)
        assert grid.price_step(call) == 2.0

    def test_default_s_max(self, call):
        """No s_max means three times the strike."""
        assert GridSpec(n_space=300).s_nodes(call)[-1] == pytest.approx(300.0)

    def test_rejects_small_grids(self):
        """Fewer than four price intervals or no time steps are rejected."""
        with pytest.raises(ValueError):
            GridSpec(s_max=300.0, n_space=3)
        with pytest.raises(ValueError):
            GridSpec(s_max=300.0, n_time=0)

    def test_strike_beyond_grid(self):
        """The strike must lie inside the grid."""
        with pytest.raises(ValueError):
            GridSpec(s_max=80.0).price_step(Payoff("call", 100.0))


class TestFirstDerivative:
    """Finite-difference d/dS."""

    def test_exact_on_quadratics(self):
        """Central and one-sided second-order stencils are exact for x**2."""
        x = np.arange(11, dtype=np.float64) * 0.5
        np.testing.assert_allclose(first_derivative(x**2, 0.5), 2.0 * x, atol=1e-12)


class TestBlackScholesReduction:
    """No jumps, no impact: the surface is the Black-Scholes price."""

    def test_small_grid(self, bs_surface):
        """150 x 100 grid within 1%."""
        assert bs_surface.spot_price() == pytest.approx(BS_CALL, rel=0.01)

    @pytest.mark.slow
    def test_reference_grid(self, bs_params, closure, call):
        """400 x 400 grid on [0, 300] within 0.5%."""
        surface = solve_pide(bs_params, closure, GridSpec(s_max=300.0, n_space=400, n_time=400), call)
        assert surface.spot_price() == pytest.approx(BS_CALL, rel=0.005)

    def test_grid_refinement(self, bs_params, closure, call):
        """The error against the closed form falls as the grid refines."""
        errors = [
            abs(solve_pide(bs_params, closure, GridSpec(s_max=300.0, n_space=n, n_time=n), call).spot_price() - BS_CALL)
            for n in (50, 100, 200)
        ]
        assert errors[0] > errors[1] > errors[2]

    def test_terminal_level(self, bs_surface, call):
        """The maturity row equals the payoff."""
        np.testing.assert_array_equal(bs_surface.f[-1], payoff_eval(call, bs_surface.S))

    def test_call_boundaries(self, bs_surface):
        """f(t, 0) = 0 and f(t, S_max) = S_max - K exp(-r (T - t)) for a call."""
        np.testing.assert_array_equal(bs_surface.f[:, 0], 0.0)
        expected = bs_surface.S[-1] - 100.0 * np.exp(-0.05 * (1.0 - bs_surface.t))
        np.testing.assert_allclose(bs_surface.f[:, -1], expected, rtol=1e-12)

    @pytest.mark.parametrize("s_max, n_space", [(300.0, 150), (400.0, 200)])
    def test_call_upper_asymptote(self, bs_params, closure, call, s_max, n_space):
        """The upper row follows S_max - K exp(-r (T - t)) wherever the grid ends."""
        surface = solve_pide(bs_params, closure, GridSpec(s_max=s_max, n_space=n_space, n_time=50), call)
        assert surface.S[-1] == s_max
        expected = s_max - 100.0 * np.exp(-0.05 * (1.0 - surface.t))
        np.testing.assert_allclose(surface.f[:, -1], expected, rtol=1e-12)

    def test_ordered_payoffs_give_ordered_surfaces(self, jump_params, closure, small_grid):
        """Without impact a smaller payoff never prices above a larger one."""
        pairs = [
            (Payoff("call", 110.0), Payoff("call", 100.0)),
            (Payoff("put", 90.0), Payoff("put", 100.0)),
        ]
        for low, high in pairs:
            f_low = solve_pide(jump_params, closure, small_grid, low)
            f_high = solve_pide(jump_params, closure, small_grid, high)
            np.testing.assert_array_equal(f_low.S, f_high.S)
            assert np.max(f_low.f - f_high.f) <= 1e-8 * 100.0

    def test_put_lower_boundary(self, bs_params, closure, small_grid):
        """A put at S = 0 is worth the discounted strike."""
        surface = solve_pide(bs_params, closure, small_grid, Payoff("put", 100.0))
        np.testing.assert_allclose(surface.f[:, 0], 100.0 * np.exp(-0.05 * (1.0 - surface.t)), rtol=1e-12)

    def test_monotone_in_price(self, bs_surface):
        """A call surface increases with S at every time level."""
        assert np.all(np.diff(bs_surface.f, axis=1) >= -1e-10)

    def test_diagnostics(self, bs_surface):
        """A plain solve is monotone, non-negative and converged."""
        summary = bs_surface.diagnostics.summary()
        assert summary["monotone"] is True
        assert summary["negative"] is False
        assert summary["nonconverged"] == 0
        assert bs_surface.diagnostics.converged


class TestJumpSurface:
    """Solves with jumps and impact."""

    def test_jumps_raise_call_value(self, jump_surface, bs_surface):
        """Compensated upward jumps add convexity value."""
        assert jump_surface.spot_price() > bs_surface.spot_price()

    def test_hedge_differs_from_delta(self, jump_surface):
        """With jump loading the hedge is not the plain central difference."""
        report = reduce_to_liu_yong_check(jump_surface)
        assert not report.reduction_applies
        assert report.max_abs_diff > 1e-3

    def test_bad_jump_factor(self, closure, small_grid, call):
        """a*sigma <= -1 is rejected before solving."""
        params = ModelParams(sigma=0.2, rho=0.5, a=-6.0)
        with pytest.raises(ModelValidationError) as excinfo:
            solve_pide(params, closure, small_grid, call)
        assert excinfo.value.violations[0].invariant == "jump factor <= 0"

    def test_strict_picard_failure(self, closure, small_grid, call):
        """Strict mode turns a non-converged coupled step into NumericalError."""
        params = ModelParams(mu=0.1, sigma=0.2, r=0.05, lambda_impact=0.01)
        settings = SolverSettings(picard_max_iter=1, strict=True)
        with pytest.raises(NumericalError):
            solve_pide(params, StrategyClosure(eta=0.1), small_grid, call, settings)

    def test_value_above_grid(self, bs_surface):
        """Prices above S_max follow the payoff asymptote."""
        assert bs_surface.value_at(0.0, 400.0) == pytest.approx(400.0 - 100.0 * math.exp(-0.05))

    def test_interpolation_on_nodes(self, jump_surface):
        """value_at and theta_at reproduce node values."""
        assert jump_surface.value_at(jump_surface.t[3], jump_surface.S[40]) == pytest.approx(jump_surface.f[3, 40])
        assert jump_surface.theta_at(0.0, jump_surface.S[50]) == pytest.approx(jump_surface.theta[0, 50])


class TestLiuYongReduction:
    """Self-consistent closure with no jump constants."""

    @pytest.mark.parametrize("lam", [0.0, 0.05])
    def test_hedge_is_delta(self, lam, small_grid, call):
        """theta equals the central difference of f on interior nodes."""
        params = ModelParams(mu=0.05, sigma=0.2, r=0.05, lambda_impact=lam)
        surface = solve_pide(params, StrategyClosure(mode="self-consistent"), small_grid, call)
        report = reduce_to_liu_yong_check(surface)
        assert report.reduction_applies
        assert report.passed

    def test_converges_as_impact_vanishes(self, small_grid, call):
        """Halving lambda shrinks the sup-norm distance to the lambda = 0 surface."""
        closure = StrategyClosure(mode="self-consistent")

        def surface(lam):
            params = ModelParams(mu=0.05, sigma=0.2, r=0.05, lambda_impact=lam)
            return solve_pide(params, closure, small_grid, call).f

        base = surface(0.0)
        distances = [np.max(np.abs(surface(lam) - base)) for lam in (0.05, 0.025, 0.0125)]
        assert distances[0] > distances[1] > distances[2] > 0.0

    def test_unconverged_steps_stay_near_maturity(self, small_grid, call):
        """Only the levels next to the payoff kink may end at the Picard cap."""
        params = ModelParams(mu=0.05, sigma=0.2, r=0.05, lambda_impact=0.05)
        surface = solve_pide(params, StrategyClosure(mode="self-consistent"), small_grid, call)
        diag = surface.diagnostics
        assert all(j >= small_grid.n_time - 3 for j in diag.nonconverged_steps)
        assert np.all(diag.picard_deltas[: small_grid.n_time - 3] < SolverSettings().picard_tol * 100.0)

    def test_impact_changes_price(self, small_grid, call, bs_surface):
        """Linear impact with a self-consistent strategy moves the price."""
        params = ModelParams(mu=0.05, sigma=0.2, r=0.05, lambda_impact=0.05)
        surface = solve_pide(params, StrategyClosure(mode="self-consistent"), small_grid, call)
        assert surface.spot_price() != pytest.approx(bs_surface.spot_price(), rel=1e-6)
        assert np.all(np.isfinite(surface.zeta))


class TestPutCallParity:
    """Call minus put on the grid."""

    def test_surface_parity(self, bs_params, closure, small_grid, bs_surface):
        """f_call - f_put = S - K exp(-rT) within 1e-4 K at s0."""
        put = solve_pide(bs_params, closure, small_grid, Payoff("put", 100.0))
        gap = bs_surface.spot_price() - put.spot_price() - (100.0 - 100.0 * math.exp(-0.05))
        assert abs(gap) <= 1e-4 * 100.0

    def test_closed_form_put(self, bs_params, closure, small_grid):
        """The put surface is close to the closed-form put."""
        put = solve_pide(bs_params, closure, small_grid, Payoff("put", 100.0))
        expected = black_scholes_price(BsInputs(S=100.0, K=100.0, r=0.05, sigma=0.2, tau=1.0), "put")
        assert put.spot_price() == pytest.approx(expected, rel=0.02)
