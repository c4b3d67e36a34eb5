"""Tests for path simulation, wealth evolution and the Ito residual."""

import math
from dataclasses import replace

import numpy as np
import pytest

from impactjd.errors import ConfigError, IncompatibleSurfaceError
from impactjd.model import ModelParams, StrategyClosure
from impactjd.simulate import (
    MAX_WORKERS_ENV,
    ExponentialG,
    ItoIntegrandSpec,
    PolynomialG,
    draw_increments,
    evolve_wealth,
    ito_convergence_slope,
    ito_residual,
    max_workers,
    path_generator,
    self_financing_residual,
    simulate_coupled_system,
)


class TestRandomStreams:
    """Per-path counter-based generators."""

    def test_seed_range(self):
        """Seeds outside [0, 2**64) are rejected."""
        path_generator(2**64 - 1, 0)
        with pytest.raises(ValueError):
            path_generator(2**64, 0)
        with pytest.raises(ValueError):
            path_generator(-1, 0)

    def test_streams_depend_on_path_only(self):
        """A path's draws do not depend on how many paths are drawn."""
        dW_small, dN_small = draw_increments(5, 10, 30, 0.01, 0.5, workers=1)
        dW_big, dN_big = draw_increments(5, 2500, 30, 0.01, 0.5, workers=3)
        np.testing.assert_array_equal(dW_small, dW_big[:10])
        np.testing.assert_array_equal(dN_small, dN_big[:10])

    def test_max_workers_env(self, monkeypatch):
        """The worker cap is read from the environment."""
        monkeypatch.setenv(MAX_WORKERS_ENV, "3")
        assert max_workers() == 3
        monkeypatch.delenv(MAX_WORKERS_ENV)
        assert max_workers() >= 1

    @pytest.mark.parametrize("raw", ["0", "-2", "many"])
    def test_max_workers_env_invalid(self, monkeypatch, raw):
        """Non-positive or non-integer caps raise ConfigError."""
        monkeypatch.setenv(MAX_WORKERS_ENV, raw)
        with pytest.raises(ConfigError):
            max_workers()


class TestSimulateCoupledSystem:
    """Forward price and strategy equations."""

    def test_shapes_and_start(self, jump_params, closure):
        """Time arrays have n_steps + 1 columns and start at the initial state."""
        bundle = simulate_coupled_system(jump_params, closure, 16, 40, seed=1)
        assert bundle.S.shape == (16, 41)
        assert bundle.dW.shape == (16, 40)
        assert np.all(bundle.S[:, 0] == jump_params.s0)
        assert np.all(bundle.A[:, 0] == 1.0)
        assert bundle.t[-1] == pytest.approx(jump_params.T)

    def test_deterministic(self, jump_params, closure):
        """Same seed, same bundle; worker count does not matter."""
        first = simulate_coupled_system(jump_params, closure, 2500, 20, seed=99, workers=1)
        second = simulate_coupled_system(jump_params, closure, 2500, 20, seed=99, workers=4)
        assert first.equals(second)

    def test_seed_changes_paths(self, jump_params, closure):
        """Different seeds give different paths."""
        first = simulate_coupled_system(jump_params, closure, 10, 20, seed=1)
        second = simulate_coupled_system(jump_params, closure, 10, 20, seed=2)
        assert not first.equals(second)

    def test_jump_factor(self, jump_params, closure):
        """With a = 0.5 and sigma = 0.2 every jump multiplies the price by 1.1."""
        bundle = simulate_coupled_system(jump_params, closure, 500, 100, seed=4)
        np.testing.assert_allclose(bundle.jump, 1.1, rtol=0, atol=1e-15)
        assert bundle.dN.sum() > 0
        ratio = bundle.S[:, 1:] / bundle.S_pre
        np.testing.assert_allclose(ratio, 1.1**bundle.dN, rtol=1e-12)
        np.testing.assert_array_equal(bundle.N[:, -1], bundle.dN.sum(axis=1))

    def test_no_jumps_without_intensity(self, bs_params, closure):
        """rho = 0 draws no jumps."""
        bundle = simulate_coupled_system(bs_params, closure, 200, 50, seed=4)
        assert bundle.dN.sum() == 0

    def test_discounted_price_is_martingale(self, jump_params, closure):
        """With mu = r the discounted terminal price averages to s0."""
        bundle = simulate_coupled_system(jump_params, closure, 20_000, 50, seed=11)
        discounted = bundle.S[:, -1] / bundle.A[:, -1]
        stderr = discounted.std(ddof=1) / math.sqrt(discounted.size)
        assert abs(discounted.mean() - jump_params.s0) <= 5.0 * stderr

    def test_compensated_jumps_are_martingale(self, jump_params, closure):
        """M_T = N_T - rho*T has mean zero within three standard deviations."""
        bundle = simulate_coupled_system(jump_params, closure, 20_000, 50, seed=12)
        M_T = bundle.M[:, -1]
        assert abs(M_T.mean()) <= 3.0 * math.sqrt(jump_params.rho * jump_params.T / M_T.size)

    def test_quadratic_variation(self, bs_params, closure):
        """The mean of sum(dW**2) is T within five standard errors."""
        bundle = simulate_coupled_system(bs_params, closure, 20_000, 50, seed=13)
        qv = np.sum(bundle.dW**2, axis=1)
        stderr = qv.std(ddof=1) / math.sqrt(qv.size)
        assert abs(qv.mean() - bs_params.T) <= 5.0 * stderr

    def test_strategy_follows_closure(self, bs_params):
        """Constant eta and zero zeta move theta linearly in time."""
        closure = StrategyClosure(eta=0.5, zeta=0.0)
        bundle = simulate_coupled_system(bs_params, closure, 4, 10, seed=3)
        np.testing.assert_allclose(bundle.theta[:, -1], bs_params.theta0 + 0.5 * bs_params.T)

    def test_self_consistent_needs_surface(self, bs_params):
        """Self-consistent mode without a surface raises ConfigError."""
        with pytest.raises(ConfigError):
            simulate_coupled_system(bs_params, StrategyClosure(mode="self-consistent"), 4, 10, seed=3)

    def test_counts_validated(self, bs_params, closure):
        """Zero paths or steps are rejected."""
        with pytest.raises(ValueError):
            simulate_coupled_system(bs_params, closure, 0, 10, seed=3)
        with pytest.raises(ValueError):
            simulate_coupled_system(bs_params, closure, 4, 0, seed=3)


class TestEvolveWealth:
    """Wealth equation along simulated paths."""

    def test_zero_position_grows_with_bank(self, jump_params, closure):
        """Holding no shares gives V = V0 * A."""
        bundle = simulate_coupled_system(jump_params, closure, 100, 50, seed=8)
        wealth = evolve_wealth(bundle, jump_params, closure, V0=3.0, holdings=np.zeros_like(bundle.S))
        np.testing.assert_allclose(wealth.V, 3.0 * bundle.A, rtol=1e-12)

    def test_unit_holding_tracks_the_asset(self, closure):
        """Holding one share with mu = r keeps E[V_T] - E[S_T] at the grown cash gap."""
        params = ModelParams(mu=0.05, sigma=0.2, r=0.05, rho=0.5, a=0.5, theta0=1.0)
        bundle = simulate_coupled_system(params, closure, 4000, 100, seed=17)
        wealth = evolve_wealth(bundle, params, closure, V0=150.0, holdings=np.ones_like(bundle.S))
        V_T, S_T = wealth.V[:, -1], bundle.S[:, -1]
        se = math.sqrt((V_T.var(ddof=1) + S_T.var(ddof=1)) / len(V_T))
        assert abs(V_T.mean() - S_T.mean() - 50.0 * math.exp(0.05)) < 3.0 * se

    def test_unit_holding_without_jumps(self, bs_params, closure):
        """Without jumps V - S is the cash gap carried by the bank account."""
        bundle = simulate_coupled_system(bs_params, closure, 50, 40, seed=17)
        wealth = evolve_wealth(bundle, bs_params, closure, V0=150.0, holdings=np.ones_like(bundle.S))
        np.testing.assert_allclose(wealth.V - bundle.S, 50.0 * bundle.A, rtol=1e-9)

    def test_default_initial_wealth(self, closure):
        """V0 defaults to theta0 * s0."""
        params = ModelParams(sigma=0.2, s0=50.0, theta0=2.0)
        bundle = simulate_coupled_system(params, closure, 4, 10, seed=8)
        wealth = evolve_wealth(bundle, params, closure)
        assert wealth.V0 == 100.0
        assert np.all(wealth.V[:, 0] == 100.0)

    def test_rejects_foreign_bundle(self, bs_params, jump_params, closure):
        """A bundle simulated under other params is rejected."""
        bundle = simulate_coupled_system(bs_params, closure, 4, 10, seed=8)
        with pytest.raises(IncompatibleSurfaceError):
            evolve_wealth(bundle, jump_params, closure)

    def test_holdings_shape(self, bs_params, closure):
        """Holdings of the wrong shape raise ValueError."""
        bundle = simulate_coupled_system(bs_params, closure, 4, 10, seed=8)
        with pytest.raises(ValueError):
            evolve_wealth(bundle, bs_params, closure, holdings=np.zeros((4, 10)))

    def test_psi_needs_wealth(self, bs_params, closure):
        """Bank units are undefined before the wealth is evolved."""
        bundle = simulate_coupled_system(bs_params, closure, 4, 10, seed=8)
        with pytest.raises(ValueError):
            bundle.psi


class TestSelfFinancing:
    """Wealth against the discretely rebalanced portfolio."""

    def test_unit_jump_factor_has_no_gap(self, closure):
        """With J = 1 the wealth is exactly self-financing up to rounding."""
        params = ModelParams(mu=0.05, sigma=0.2, r=0.05, rho=4.0, a=0.0, theta0=1.0)
        bundle = simulate_coupled_system(params, closure, 200, 50, seed=21)
        report = self_financing_residual(evolve_wealth(bundle, params, closure))
        assert report.max_abs < 1e-9

    def test_single_jumps_have_no_gap(self, closure):
        """Steps with at most one jump leave no gap."""
        params = ModelParams(mu=0.05, sigma=0.2, r=0.05, rho=0.1, a=0.5, theta0=1.0)
        bundle = simulate_coupled_system(params, closure, 200, 100, seed=21)
        if bundle.dN.max() > 1:
            pytest.skip("seed produced a multi-jump step")
        assert bundle.dN.sum() > 0
        report = self_financing_residual(evolve_wealth(bundle, params, closure))
        assert report.max_abs < 1e-9

    @pytest.mark.slow
    def test_gap_halves_with_step(self, closure):
        """Doubling the step count roughly halves the mean per-path gap."""
        params = ModelParams(mu=0.05, sigma=0.2, r=0.05, rho=4.0, a=0.5, theta0=1.0)
        gaps = []
        for n_steps in (50, 100):
            bundle = simulate_coupled_system(params, closure, 20_000, n_steps, seed=31)
            gaps.append(self_financing_residual(evolve_wealth(bundle, params, closure)).mean_path_max)
        assert 1.6 <= gaps[0] / gaps[1] <= 2.4


class TestItoResidual:
    """Ito formula with jumps checked along paths."""

    @pytest.fixture
    def spec(self):
        return ItoIntegrandSpec(g=0.1, l=0.2, k=0.3, G=PolynomialG([0.0, 0.0, 1.0]), rho=0.5)

    def test_linear_function_is_exact(self, spec):
        """For G = x the expansion matches to rounding."""
        report = ito_residual(replace(spec, G=PolynomialG([0.0, 1.0])), 500, 100, seed=3)
        assert report.mean <= 1e-10
        assert report.terms["jump_mismatch"] <= 1e-12

    def test_quadratic_converges_at_first_order(self, spec):
        """The mean residual for G = x**2 shrinks like dt."""
        slope, reports = ito_convergence_slope(spec, 1000, (100, 200, 400, 800), seed=3)
        assert 0.7 <= slope <= 1.3
        assert reports[0].mean > reports[-1].mean

    def test_time_dependent_function_converges(self, spec):
        """For G = exp(0.1 t + 0.5 x) the residual shrinks as the grid refines."""
        G = ExponentialG(alpha=0.1, beta=0.5)
        coarse = ito_residual(replace(spec, G=G), 500, 50, seed=3)
        fine = ito_residual(replace(spec, G=G), 500, 400, seed=3)
        assert fine.mean < 0.5 * coarse.mean

    def test_slope_needs_two_counts(self, spec):
        """One step count cannot fit a slope."""
        with pytest.raises(ValueError):
            ito_convergence_slope(spec, 10, (100,), seed=3)

    def test_rejects_negative_intensity(self):
        """rho < 0 is rejected at construction."""
        with pytest.raises(ValueError):
            ItoIntegrandSpec(g=0.0, l=0.1, k=0.1, G=PolynomialG([0.0, 1.0]), rho=-1.0)
