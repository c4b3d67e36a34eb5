"""
Validation suite run by ``impactjd validate``.

Each check is a small class with a ``name`` matching an entry of
``config.ALL_CHECKS`` and a ``run`` method returning a CheckResult with
the measured values next to their thresholds. Checks never raise on a
failed comparison; the suite collects results and the CLI turns a failed
suite into CheckFailure.

Checks that need a jump market use the reference jump configuration
(a = 0.5, rho = 0.5, lambda = 0, sigma = 0.2, r = mu = 0.05) on the run's
grid; the others read their inputs from the run config.
"""

from __future__ import annotations

import logging
import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .config import ALL_CHECKS, RunConfig
from .errors import CheckFailure, DegenerateHedgeError
from .hedge import (
    HedgeContext,
    PerturbedPolicy,
    ReplicationReport,
    SurfacePolicy,
    combined_stderr,
    replication_errors,
    theta_oracle,
    theta_star,
)
from .model import ModelParams, Payoff, StrategyClosure
from .oracles import BsInputs, black_scholes_price, put_call_parity_gap
from .pide import GridSpec, PriceSurface, SolverSettings, reduce_to_liu_yong_check, solve_pide
from .simulate import (
    ItoIntegrandSpec,
    PolynomialG,
    draw_increments,
    evolve_wealth,
    ito_convergence_slope,
    ito_residual,
    self_financing_residual,
    simulate_coupled_system,
)

logger = logging.getLogger(__name__)

# Ranges of the random hedge contexts
CONTEXT_RANGES: dict[str, tuple[float, float]] = {
    "sigma": (0.05, 0.6),
    "lam": (0.0, 0.1),
    "zeta": (-1.0, 1.0),
    "a": (-2.0, 2.0),
    "b": (-2.0, 2.0),
    "rho": (0.0, 2.0),
    "S": (1.0, 500.0),
}


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check: measured values against their thresholds."""

    name: str
    passed: bool
    measured: dict[str, float] = field(default_factory=dict)
    thresholds: dict[str, float] = field(default_factory=dict)
    detail: str = ""
    seconds: float = 0.0

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        measured = ", ".join(f"{k}={v:.6g}" for k, v in self.measured.items())
        limits = ", ".join(f"{k}={v:.6g}" for k, v in self.thresholds.items())
        line = f"[{status}] {self.name}: {measured}"
        if limits:
            line += f" (thresholds: {limits})"
        if self.detail:
            line += f" - {self.detail}"
        return line

    def rows(self) -> list[dict[str, object]]:
        """One row per measured value, for the CSV report."""
        return [
            {
                "check": self.name,
                "quantity": key,
                "measured": value,
                "threshold": self.thresholds.get(key, math.nan),
                "passed": self.passed,
            }
            for key, value in self.measured.items()
        ]


class BaseCheck(ABC):
    """
    Abstract base class for validation checks.

    Example:
        ```python
        class PositivePrice(BaseCheck):
            name = "positive_price"

            def run(self, config: RunConfig) -> CheckResult:
                price = solve_pide(config.model, config.closure, config.grid, config.payoff).spot_price()
                return CheckResult(self.name, price > 0, {"price": price}, {"price": 0.0})
        ```
    """

    name: str = ""

    @abstractmethod
    def run(self, config: RunConfig) -> CheckResult:
        """
        Run the check.

        Args:
            config: The run configuration (sizes come from ``config.validate``).

        Returns:
            CheckResult; a failed comparison is reported, not raised.
        """
        pass


# ---------------------------------------------------------------------------
# Shared inputs
# ---------------------------------------------------------------------------


def _vanilla(config: RunConfig) -> Payoff:
    """The run's payoff when it is a call or put, else a call struck at 100."""
    if config.payoff.kind in ("call", "put"):
        return config.payoff
    return Payoff("call", 100.0)


def _bs_market(config: RunConfig) -> ModelParams:
    """Constant-coefficient market without impact or jumps, read at (0, s0)."""
    m = config.model
    s0 = m.s0
    r = float(m.r_fn(0.0, s0))
    return ModelParams(mu=r, sigma=float(m.sigma_fn(0.0, s0)), r=r, s0=s0, T=m.T)


def _bs_inputs(params: ModelParams, strike: float) -> BsInputs:
    s0 = params.s0
    return BsInputs(
        S=s0, K=strike, r=float(params.r_fn(0.0, s0)), sigma=float(params.sigma_fn(0.0, s0)), tau=params.T
    )


def jump_market(config: RunConfig) -> ModelParams:
    """Reference jump market used by the hedging checks."""
    return ModelParams(
        mu=0.05, sigma=0.2, r=0.05, lambda_impact=0.0, rho=0.5, a=0.5, b=0.0, s0=config.model.s0, T=1.0
    )


@lru_cache(maxsize=8)
def _solve_cached(
    params: ModelParams,
    closure: StrategyClosure,
    grid: GridSpec,
    payoff: Payoff,
    settings: SolverSettings,
) -> PriceSurface:
    return solve_pide(params, closure, grid, payoff, settings)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------------------
# Random-stream checks
# ---------------------------------------------------------------------------


class MartingaleCheck(BaseCheck):
    """Sample mean of the compensated Poisson process at T."""

    name = "martingale"

    def run(self, config: RunConfig) -> CheckResult:
        v = config.validate
        rho = config.model.rho if config.model.rho > 0 else 0.5
        T = config.model.T
        _, dN = draw_increments(v.seed, v.martingale_paths, v.martingale_steps, T / v.martingale_steps, rho)
        M_T = dN.sum(axis=1) - rho * T
        mean = float(M_T.mean())
        bound = 3.0 * math.sqrt(rho * T / v.martingale_paths)
        return CheckResult(
            self.name,
            abs(mean) <= bound,
            {"abs_mean_M_T": abs(mean)},
            {"abs_mean_M_T": bound},
            detail=f"rho={rho:g}, n_paths={v.martingale_paths}",
        )


class QuadraticVariationCheck(BaseCheck):
    """Mean per-path sum of dW**2 against T, in standard errors."""

    name = "quadratic_variation"

    def run(self, config: RunConfig) -> CheckResult:
        v = config.validate
        T = config.model.T
        dW, _ = draw_increments(v.seed, v.martingale_paths, v.martingale_steps, T / v.martingale_steps, 0.0)
        qv = np.sum(dW * dW, axis=1)
        stderr = float(qv.std(ddof=1) / math.sqrt(qv.size))
        z = abs(float(qv.mean()) - T) / stderr
        return CheckResult(self.name, z <= 5.0, {"stderr_units": z}, {"stderr_units": 5.0})


class ItoResidualCheck(BaseCheck):
    """Convergence order of the Ito residual for G = x**2 and exactness for G = x."""

    name = "ito_residual"

    def run(self, config: RunConfig) -> CheckResult:
        v = config.validate
        spec = ItoIntegrandSpec(g=0.1, l=0.2, k=0.3, G=PolynomialG([0.0, 0.0, 1.0]), rho=0.5)
        slope, _ = ito_convergence_slope(spec, v.ito_paths, v.ito_step_counts, v.seed)

        linear = replace(spec, G=PolynomialG([0.0, 1.0]))
        exact = ito_residual(linear, v.ito_paths, v.ito_step_counts[0], v.seed).mean
        passed = abs(slope - 1.0) <= 0.3 and exact <= 1e-10
        return CheckResult(
            self.name,
            passed,
            {"slope": slope, "linear_residual": exact},
            {"slope": 1.0, "linear_residual": 1e-10},
            detail="slope must lie in [0.7, 1.3]",
        )


class DeterminismCheck(BaseCheck):
    """Bundles from one seed agree bit for bit across worker counts."""

    name = "determinism"

    def run(self, config: RunConfig) -> CheckResult:
        v = config.validate
        closure = StrategyClosure(eta=config.closure.eta, zeta=config.closure.zeta)
        n_paths = 2500
        first = simulate_coupled_system(config.model, closure, n_paths, v.martingale_steps, v.seed, workers=1)
        second = simulate_coupled_system(config.model, closure, n_paths, v.martingale_steps, v.seed, workers=4)
        same = first.equals(second)
        return CheckResult(
            self.name,
            same,
            {"identical": float(same)},
            {"identical": 1.0},
            detail=f"{n_paths} paths, workers 1 vs 4",
        )


class SelfFinancingCheck(BaseCheck):
    """Gap between wealth and the rebalanced portfolio halves with dt."""

    name = "self_financing"

    def run(self, config: RunConfig) -> CheckResult:
        v = config.validate
        params = ModelParams(mu=0.05, sigma=0.2, r=0.05, rho=4.0, a=0.5, s0=config.model.s0, theta0=1.0)
        closure = StrategyClosure()
        n_paths = 2 * v.hedge_paths
        gaps = []
        for n_steps in (50, 100):
            bundle = simulate_coupled_system(params, closure, n_paths, n_steps, v.seed)
            gaps.append(self_financing_residual(evolve_wealth(bundle, params, closure)).mean_path_max)
        ratio = gaps[0] / gaps[1] if gaps[1] > 0 else math.inf
        return CheckResult(
            self.name,
            1.6 <= ratio <= 2.4,
            {"halving_ratio": ratio, "gap_50": gaps[0], "gap_100": gaps[1]},
            {"halving_ratio": 2.0},
            detail="ratio must lie in [1.6, 2.4]",
        )


# ---------------------------------------------------------------------------
# Hedge-formula checks
# ---------------------------------------------------------------------------


def random_contexts(n: int, seed: int, jumps: bool = True) -> Iterator[HedgeContext]:
    """
    Random valid hedge contexts drawn from CONTEXT_RANGES.

    Draws with a non-positive jump factor 1 + a*sigma + b*lambda*zeta are
    skipped. Without ``jumps`` the jump constants are zero.
    """
    rng = np.random.default_rng(seed)
    made = 0
    while made < n:
        draw = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in CONTEXT_RANGES.items()}
        if not jumps:
            draw["a"] = draw["b"] = 0.0
        if 1.0 + draw["a"] * draw["sigma"] + draw["b"] * draw["lam"] * draw["zeta"] <= 0.0:
            continue
        f = float(rng.uniform(0.0, draw["S"]))
        made += 1
        yield HedgeContext(
            S=draw["S"],
            f=f,
            f_S=float(rng.uniform(-1.0, 2.0)),
            f_jumped=float(rng.uniform(0.0, 2.0 * draw["S"])),
            sigma=draw["sigma"],
            lam=draw["lam"],
            zeta=draw["zeta"],
            a=draw["a"],
            b=draw["b"],
            rho=draw["rho"],
        )


class VertexEquivalenceCheck(BaseCheck):
    """Closed-form hedge against the direct minimization of the quadratic."""

    name = "vertex_equivalence"

    def run(self, config: RunConfig) -> CheckResult:
        v = config.validate
        failures = 0
        skipped = 0
        worst = 0.0
        for ctx in random_contexts(v.vertex_contexts, v.seed):
            try:
                closed = theta_star(ctx)
            except DegenerateHedgeError:
                skipped += 1
                continue
            err = abs(closed - theta_oracle(ctx)) / (1.0 + abs(closed))
            worst = max(worst, err)
            failures += err > 1e-10
        return CheckResult(
            self.name,
            failures == 0,
            {"max_scaled_error": worst, "failures": float(failures)},
            {"max_scaled_error": 1e-10, "failures": 0.0},
            detail=f"{v.vertex_contexts} contexts, {skipped} degenerate",
        )


class ThetaReductionCheck(BaseCheck):
    """Without jump loading the hedge equals f_S exactly."""

    name = "theta_reduction"

    def run(self, config: RunConfig) -> CheckResult:
        v = config.validate
        mismatches = 0
        for ctx in random_contexts(v.vertex_contexts, v.seed, jumps=False):
            mismatches += theta_star(ctx) != ctx.f_S
        return CheckResult(self.name, mismatches == 0, {"mismatches": float(mismatches)}, {"mismatches": 0.0})


# ---------------------------------------------------------------------------
# Solver checks
# ---------------------------------------------------------------------------


class BlackScholesReductionCheck(BaseCheck):
    """Surface price without jumps or impact against the closed form."""

    name = "black_scholes_reduction"

    def run(self, config: RunConfig) -> CheckResult:
        params = _bs_market(config)
        payoff = _vanilla(config)
        surface = _solve_cached(params, StrategyClosure(), config.grid, payoff, config.solver)
        oracle = black_scholes_price(_bs_inputs(params, payoff.strike), kind=payoff.kind)  # type: ignore[arg-type]
        err = _relative(surface.spot_price(), oracle)
        tol = config.validate.bs_tolerance
        return CheckResult(
            self.name,
            err <= tol,
            {"relative_error": err, "price": surface.spot_price(), "oracle": oracle},
            {"relative_error": tol},
            detail=f"grid {config.grid.n_time}x{config.grid.n_space}",
        )


class LiuYongReductionCheck(BaseCheck):
    """Surface hedge equals the central difference of f when a = b = 0."""

    name = "liu_yong_reduction"

    def run(self, config: RunConfig) -> CheckResult:
        base = _bs_market(config)
        payoff = _vanilla(config)
        closure = StrategyClosure(mode="self-consistent")
        measured: dict[str, float] = {}
        thresholds: dict[str, float] = {}
        passed = True
        for lam in (0.0, 0.05):
            params = replace(base, lambda_impact=lam)
            report = reduce_to_liu_yong_check(_solve_cached(params, closure, config.grid, payoff, config.solver))
            key = f"max_diff_lambda_{lam:g}"
            measured[key] = report.max_abs_diff
            thresholds[key] = report.tolerance
            passed = passed and report.passed
        return CheckResult(self.name, passed, measured, thresholds)


class PutCallParityCheck(BaseCheck):
    """Call minus put equals S - K exp(-r tau), closed form and on the surface."""

    name = "put_call_parity"

    def run(self, config: RunConfig) -> CheckResult:
        strike = _vanilla(config).strike
        inputs = _bs_inputs(config.model, strike)
        gap = abs(put_call_parity_gap(inputs))

        params = replace(config.model, lambda_impact=0.0)
        closure = StrategyClosure()
        call = _solve_cached(params, closure, config.grid, Payoff("call", strike), config.solver)
        put = _solve_cached(params, closure, config.grid, Payoff("put", strike), config.solver)
        surface_gap = abs(
            call.spot_price() - put.spot_price() - (params.s0 - strike * math.exp(-inputs.r * inputs.tau))
        )
        tol = 1e-4 * strike
        return CheckResult(
            self.name,
            gap <= 1e-10 and surface_gap <= tol,
            {"closed_form_gap": gap, "surface_gap": surface_gap},
            {"closed_form_gap": 1e-10, "surface_gap": tol},
        )


# ---------------------------------------------------------------------------
# Monte Carlo hedging checks
# ---------------------------------------------------------------------------


def _jump_surface(config: RunConfig, params: ModelParams | None = None) -> PriceSurface:
    return _solve_cached(
        params or jump_market(config), StrategyClosure(), config.grid, _vanilla(config), config.solver
    )


class VarianceOptimalityCheck(BaseCheck):
    """The surface hedge beats its shifts by more than two combined standard errors."""

    name = "variance_optimality"

    def run(self, config: RunConfig) -> CheckResult:
        v = config.validate
        params = jump_market(config)
        surface = _jump_surface(config)
        policies = [SurfacePolicy(surface)] + [
            PerturbedPolicy(surface, eps, d) for eps in (0.05, 0.1) for d in (1, -1)
        ]
        reports = replication_errors(params, StrategyClosure(), policies, surface, v.hedge_paths, v.hedge_steps, v.seed)
        best = reports[0]
        measured = {best.strategy: best.estimate}
        thresholds: dict[str, float] = {}
        passed = True
        for other in reports[1:]:
            margin = (other.estimate - best.estimate) / combined_stderr(best, other)
            measured[f"gap_{other.strategy}"] = margin
            thresholds[f"gap_{other.strategy}"] = 2.0
            passed = passed and margin >= 2.0
        return CheckResult(self.name, passed, measured, thresholds, detail="gaps in combined standard errors")


class IncompletenessCheck(BaseCheck):
    """Hedging error plateaus with jumps and vanishes without them."""

    name = "incompleteness"

    def _estimate(self, params: ModelParams, surface: PriceSurface, n_steps: int, config: RunConfig) -> ReplicationReport:
        v = config.validate
        return replication_errors(
            params, StrategyClosure(), [SurfacePolicy(surface)], surface, v.hedge_paths, n_steps, v.seed
        )[0]

    def run(self, config: RunConfig) -> CheckResult:
        n = config.validate.hedge_steps
        params = jump_market(config)
        surface = _jump_surface(config)
        coarse = self._estimate(params, surface, n, config)
        fine = self._estimate(params, surface, 2 * n, config)
        change = _relative(fine.estimate, coarse.estimate)
        signal = fine.estimate / fine.stderr if fine.stderr > 0 else math.inf

        smooth = replace(params, rho=0.0, a=0.0)
        smooth_surface = _jump_surface(config, smooth)
        start = self._estimate(smooth, smooth_surface, 50, config)
        end = self._estimate(smooth, smooth_surface, 2 * n, config)
        shrink = end.estimate / start.estimate

        passed = change < 0.25 and signal > 5.0 and shrink < 0.25
        return CheckResult(
            self.name,
            passed,
            {"plateau_change": change, "stderr_units": signal, "no_jump_ratio": shrink},
            {"plateau_change": 0.25, "stderr_units": 5.0, "no_jump_ratio": 0.25},
        )


_REGISTRY: dict[str, type[BaseCheck]] = {
    cls.name: cls
    for cls in (
        MartingaleCheck,
        QuadraticVariationCheck,
        ItoResidualCheck,
        VertexEquivalenceCheck,
        ThetaReductionCheck,
        BlackScholesReductionCheck,
        LiuYongReductionCheck,
        VarianceOptimalityCheck,
        IncompletenessCheck,
        SelfFinancingCheck,
        DeterminismCheck,
        PutCallParityCheck,
    )
}
assert set(_REGISTRY) == set(ALL_CHECKS)


def get_check(name: str) -> BaseCheck:
    """
    Instantiate a check by name.

    Raises:
        KeyError: If no check has that name.
    """
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"Unknown check {name!r}; available: {sorted(_REGISTRY)}") from None


class CheckSuite:
    """
    Ordered collection of checks.

    Unlike a filter chain the suite may be empty; an empty suite passes.

    Example:
        ```python
        suite = CheckSuite.from_names(["martingale", "vertex_equivalence"])
        results = suite.run(config)
        suite.raise_on_failure(results)
        ```
    """

    def __init__(self, checks: Sequence[BaseCheck] = ()) -> None:
        self.checks = list(checks)

    @classmethod
    def from_names(cls, names: Sequence[str]) -> CheckSuite:
        return cls([get_check(n) for n in names])

    def run(self, config: RunConfig) -> list[CheckResult]:
        results = []
        for check in self.checks:
            start = time.perf_counter()
            result = check.run(config)
            result = replace(result, seconds=time.perf_counter() - start)
            log = logger.info if result.passed else logger.warning
            log(result.summary())
            results.append(result)
        return results

    @staticmethod
    def raise_on_failure(results: Sequence[CheckResult]) -> None:
        """Raise CheckFailure naming every failed check."""
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise CheckFailure(f"Failed check(s): {', '.join(failed)}")

    def __len__(self) -> int:
        return len(self.checks)

    def __getitem__(self, index: int) -> BaseCheck:
        return self.checks[index]


__all__ = [
    "CONTEXT_RANGES",
    "CheckResult",
    "BaseCheck",
    "CheckSuite",
    "get_check",
    "jump_market",
    "random_contexts",
    "MartingaleCheck",
    "QuadraticVariationCheck",
    "ItoResidualCheck",
    "VertexEquivalenceCheck",
    "ThetaReductionCheck",
    "BlackScholesReductionCheck",
    "LiuYongReductionCheck",
    "VarianceOptimalityCheck",
    "IncompletenessCheck",
    "SelfFinancingCheck",
    "DeterminismCheck",
    "PutCallParityCheck",
]
