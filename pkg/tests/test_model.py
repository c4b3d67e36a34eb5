"""Tests for model parameters, payoffs, jump factors and validation."""

import math

import numpy as np
import pytest

from impactjd.errors import JumpFactorError, ModelValidationError
from impactjd.model import (
    MAX_LISTED_VIOLATIONS,
    ModelParams,
    Payoff,
    StrategyClosure,
    jump_factor,
    model_fingerprint,
    payoff_eval,
    validate_params,
    validate_step_size,
)
from impactjd.pide import GridSpec


class TestJumpFactor:
    """The shared multiplicative jump displacement."""

    def test_no_jump_constants(self):
        """a = b = 0 gives exactly one whatever the other inputs."""
        params = ModelParams(sigma=0.4, lambda_impact=0.3)
        assert jump_factor(params, 0.2, 80.0, 0.7) == 1.0

    def test_sigma_only(self):
        """a = 0.5 with sigma = 0.2 and no impact gives 1.1."""
        params = ModelParams(sigma=0.2, a=0.5)
        assert jump_factor(params, 0.0, 100.0, 0.0) == pytest.approx(1.1, rel=1e-15)

    def test_affine_formula(self):
        """a = -0.5, sigma = 0.2, b = 1, lambda = 0.1, zeta = 0.3 gives 0.93."""
        params = ModelParams(sigma=0.2, lambda_impact=0.1, a=-0.5, b=1.0)
        assert jump_factor(params, 0.0, 100.0, 0.3) == pytest.approx(0.93, rel=1e-14)

    def test_vectorized(self):
        """Array inputs broadcast and return an array."""
        params = ModelParams(sigma={"kind": "affine", "intercept": 0.1, "slope": 0.001}, a=1.0)
        out = jump_factor(params, 0.0, np.array([50.0, 100.0]), 0.0)
        np.testing.assert_allclose(out, [1.15, 1.2])

    def test_non_positive_factor(self):
        """A non-positive factor raises JumpFactorError with located violations."""
        params = ModelParams(sigma=0.2, a=-6.0)
        with pytest.raises(JumpFactorError) as info:
            jump_factor(params, 0.5, 100.0, 0.0)
        assert info.value.violations[0].invariant == "jump factor <= 0"
        assert info.value.violations[0].s == 100.0
        assert info.value.exit_code == 3

    @pytest.mark.parametrize("S", [0.0, -1.0, float("nan")])
    def test_rejects_bad_price(self, S):
        """Non-positive or non-finite prices are rejected."""
        with pytest.raises(ValueError):
            jump_factor(ModelParams(), 0.0, S, 0.0)

    def test_rejects_non_finite_zeta(self):
        """A non-finite strategy loading is rejected."""
        with pytest.raises(ValueError):
            jump_factor(ModelParams(), 0.0, 100.0, float("inf"))


class TestPayoff:
    """Payoff evaluation and construction."""

    @pytest.mark.parametrize(
        "payoff,S,expected",
        [
            (Payoff("call", 100.0), 100.0, 0.0),
            (Payoff("call", 100.0), 137.5, 37.5),
            (Payoff("put", 100.0), 80.0, 20.0),
            (Payoff("put", 100.0), 120.0, 0.0),
        ],
    )
    def test_vanilla_values(self, payoff, S, expected):
        """Calls and puts evaluate exactly."""
        assert payoff_eval(payoff, S) == expected

    def test_scalar_returns_float(self):
        """Scalar input gives a Python float."""
        assert isinstance(payoff_eval(Payoff(), 120.0), float)

    def test_call_convex_and_monotone(self):
        """The call payoff is nondecreasing and convex on a sample."""
        S = np.linspace(0.0, 300.0, 601)
        h = payoff_eval(Payoff("call", 100.0), S)
        assert np.all(np.diff(h) >= 0)
        assert np.all(np.diff(h, 2) >= -1e-12)

    def test_table_payoff_extrapolates(self):
        """A table payoff is linear through its knots and beyond the last one."""
        p = Payoff("table", s=(0.0, 100.0, 150.0), values=(0.0, 0.0, 50.0))
        np.testing.assert_allclose(payoff_eval(p, np.array([50.0, 125.0, 200.0])), [0.0, 25.0, 100.0])
        assert p.asymptote() == (1.0, -100.0)

    def test_rejects_negative_price(self):
        """Negative terminal prices raise ValueError."""
        with pytest.raises(ValueError):
            payoff_eval(Payoff(), -1.0)

    def test_rejects_non_positive_strike(self):
        """A non-positive strike is a model validation error."""
        with pytest.raises(ModelValidationError):
            Payoff("call", 0.0)

    @pytest.mark.parametrize(
        "s,values",
        [((1.0, 2.0), (0.0, 1.0)), ((0.0, 2.0, 1.0), (0.0, 1.0, 2.0)), ((0.0,), (1.0,))],
    )
    def test_rejects_bad_table(self, s, values):
        """Tables must start at zero with increasing knots."""
        with pytest.raises(ValueError):
            Payoff("table", s=s, values=values)

    def test_asymptotes(self):
        """Call and put asymptotes and values at zero."""
        assert Payoff("call", 90.0).asymptote() == (1.0, -90.0)
        assert Payoff("put", 90.0).asymptote() == (0.0, 0.0)
        assert Payoff("put", 90.0).value_at_zero() == 90.0


class TestModelParams:
    """Parameter construction."""

    def test_numbers_become_coefficients(self):
        """Scalar market inputs are converted to constant coefficients."""
        p = ModelParams(sigma=0.3)
        assert p.sigma_fn.is_constant
        assert float(p.sigma_fn(0.0, 100.0)) == 0.3

    def test_rejects_non_finite_scalars(self):
        """Non-finite scalar parameters are rejected."""
        with pytest.raises(ValueError):
            ModelParams(rho=math.nan)

    def test_fingerprint_tracks_inputs(self):
        """Fingerprints agree for equal inputs and differ otherwise."""
        c = StrategyClosure()
        assert model_fingerprint(ModelParams(a=0.5), c) == model_fingerprint(ModelParams(a=0.5), c)
        assert model_fingerprint(ModelParams(a=0.5), c) != model_fingerprint(ModelParams(a=0.4), c)

    def test_closure_mode_checked(self):
        """Unknown closure modes are rejected."""
        with pytest.raises(ValueError):
            StrategyClosure(mode="adaptive")  # type: ignore[arg-type]


class TestValidateParams:
    """Grid-wide invariant checks."""

    @pytest.fixture
    def grid(self) -> GridSpec:
        return GridSpec(s_max=300.0, n_space=150, n_time=100)

    def test_defaults_are_valid(self, grid):
        """Default parameters produce an empty report."""
        report = validate_params(ModelParams(), grid, StrategyClosure())
        assert report.ok
        assert str(report) == "model valid"

    def test_negative_jump_factor(self, grid):
        """sigma = 0.2 with a = -6 violates the jump factor everywhere."""
        report = validate_params(ModelParams(sigma=0.2, a=-6.0), grid, StrategyClosure())
        assert report.invariants == ["jump factor <= 0"]
        with pytest.raises(ModelValidationError, match="jump factor <= 0"):
            report.raise_if_invalid()

    def test_violation_at_every_node(self, grid):
        """lambda = 0.1, b = -40 and zeta = 0.3 fail at every positive-price node."""
        params = ModelParams(lambda_impact=0.1, b=-40.0)
        report = validate_params(params, grid, StrategyClosure(zeta=0.3))
        assert report.counts["jump factor <= 0"] == 101 * 150
        assert len(report.violations) == MAX_LISTED_VIOLATIONS
        first = report.violations[0]
        assert first.t == 0.0 and first.s == 2.0

    def test_table_sigma_sign_located(self, grid):
        """A table volatility that turns negative is reported where it does."""
        sigma = {"kind": "table", "s": [0.0, 200.0, 300.0], "values": [0.2, 0.2, -0.1]}
        report = validate_params(ModelParams(sigma=sigma), grid, StrategyClosure())
        assert "sigma > 0" in report.invariants
        assert min(v.s for v in report.violations if v.invariant == "sigma > 0") > 200.0

    @pytest.mark.parametrize(
        "kwargs,invariant",
        [
            ({"s0": -1.0}, "s0 > 0"),
            ({"T": 0.0}, "T > 0"),
            ({"rho": -0.1}, "rho >= 0"),
            ({"theta0": -1.0}, "theta0 >= 0"),
        ],
    )
    def test_scalar_invariants(self, grid, kwargs, invariant):
        """Scalar invariants are reported by name."""
        report = validate_params(ModelParams(**kwargs), grid, StrategyClosure())
        assert invariant in report.invariants

    def test_negative_rate_and_impact(self, grid):
        """Negative r and lambda are both reported."""
        report = validate_params(ModelParams(r=-0.01, lambda_impact=-0.1), grid, StrategyClosure())
        assert {"r >= 0", "lambda >= 0"} <= set(report.invariants)


class TestValidateStepSize:
    """The simulator's positivity rule."""

    def test_reasonable_step_passes(self):
        """Two hundred steps are fine for the reference jump market."""
        params = ModelParams(rho=0.5, a=0.5)
        assert validate_step_size(params, StrategyClosure(), 200).ok

    def test_single_step_with_high_volatility_fails(self):
        """One step of sigma = 0.5 over T = 1 breaks the rule."""
        report = validate_step_size(ModelParams(sigma=0.5), StrategyClosure(), 1)
        assert report.invariants == ["step size"]

    def test_rejects_zero_steps(self):
        """n_steps must be positive."""
        with pytest.raises(ValueError):
            validate_step_size(ModelParams(), StrategyClosure(), 0)
