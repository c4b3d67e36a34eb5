"""
High-level facade.

``PricingEngine`` ties one market, strategy closure, grid and payoff
together: it solves the price surface once, reuses it for hedging and
shares one simulation between all hedge policies of a run.
"""

from __future__ import annotations

import logging
from typing import Any, Sequence

from numpy.typing import ArrayLike

from .hedge import (
    ConstantPolicy,
    PerturbedPolicy,
    ReplicationReport,
    SurfacePolicy,
    ThetaPolicy,
    replication_errors,
)
from .model import ModelParams, Payoff, StrategyClosure, ValidationReport, validate_params
from .pide import GridSpec, LiuYongReport, PriceSurface, SolverSettings, reduce_to_liu_yong_check, solve_pide
from .simulate import PathBundle, evolve_wealth, simulate_coupled_system

logger = logging.getLogger(__name__)


class PricingEngine:
    """
    Price, hedge and simulate one option under one market model.

    Args:
        params: Model parameters.
        closure: Strategy closure (default: exogenous, eta = zeta = 0).
        grid: PIDE grid (default: 400 x 400 up to three strikes).
        payoff: European payoff (default: call struck at 100).
        settings: Solver iteration controls.
        workers: Thread cap for random-stream generation.

    Example:
        ```python
        from impactjd import ModelParams, Payoff, PricingEngine

        engine = PricingEngine(ModelParams(a=0.5, rho=0.5), payoff=Payoff("call", 100.0))
        print(engine.price())
        for report in engine.replicate(n_paths=10_000, n_steps=200, seed=7):
            print(report.strategy, report.estimate, report.stderr)
        ```
    """

    def __init__(
        self,
        params: ModelParams,
        closure: StrategyClosure | None = None,
        grid: GridSpec | None = None,
        payoff: Payoff | None = None,
        settings: SolverSettings | None = None,
        workers: int | None = None,
    ) -> None:
        self.params = params
        self.closure = closure or StrategyClosure()
        self.grid = grid or GridSpec()
        self.payoff = payoff or Payoff()
        self.settings = settings or SolverSettings()
        self.workers = workers
        self._surface: PriceSurface | None = None

    @property
    def surface(self) -> PriceSurface:
        """The solved price surface (solved on first access)."""
        if self._surface is None:
            logger.info("Solving price surface")
            self._surface = solve_pide(self.params, self.closure, self.grid, self.payoff, self.settings)
        return self._surface

    @property
    def is_solved(self) -> bool:
        return self._surface is not None

    def validate(self) -> ValidationReport:
        """Model invariants on this engine's grid."""
        return validate_params(self.params, self.grid, self.closure, self.payoff)

    def price(self) -> float:
        """f(0, s0)."""
        return self.surface.spot_price()

    def value(self, t: ArrayLike, S: ArrayLike) -> Any:
        return self.surface.value_at(t, S)

    def hedge_ratio(self, t: ArrayLike, S: ArrayLike) -> Any:
        """Variance-minimizing share count at (t, S)."""
        return self.surface.theta_at(t, S)

    def liu_yong(self) -> LiuYongReport:
        return reduce_to_liu_yong_check(self.surface)

    def simulate(self, n_paths: int, n_steps: int, seed: int, with_wealth: bool = True) -> PathBundle:
        """
        Simulate the forward system, optionally with the wealth of the
        simulated strategy started at theta0 * s0.
        """
        bundle = simulate_coupled_system(
            self.params,
            self.closure,
            n_paths,
            n_steps,
            seed,
            surface=self.surface if self.closure.self_consistent else None,
            workers=self.workers,
        )
        if with_wealth:
            bundle = evolve_wealth(bundle, self.params, self.closure)
        return bundle

    def policies(
        self, perturbations: Sequence[float] = (0.05,), include_zero: bool = True
    ) -> list[ThetaPolicy]:
        """The surface hedge, its shifts by +/- each epsilon, and optionally zero."""
        out: list[ThetaPolicy] = [SurfacePolicy(self.surface)]
        for eps in perturbations:
            out.append(PerturbedPolicy(self.surface, eps, +1))
            out.append(PerturbedPolicy(self.surface, eps, -1))
        if include_zero:
            out.append(ConstantPolicy(0.0))
        return out

    def replicate(
        self,
        n_paths: int,
        n_steps: int,
        seed: int,
        perturbations: Sequence[float] = (0.05,),
        include_zero: bool = True,
        policies: Sequence[ThetaPolicy] | None = None,
    ) -> list[ReplicationReport]:
        """Replication error of each policy on common random numbers."""
        chosen = list(policies) if policies is not None else self.policies(perturbations, include_zero)
        return replication_errors(
            self.params,
            self.closure,
            chosen,
            self.surface,
            n_paths,
            n_steps,
            seed,
            workers=self.workers,
        )

    def __repr__(self) -> str:
        state = "solved" if self.is_solved else "unsolved"
        return f"PricingEngine({self.payoff.kind}, grid={self.grid.n_time}x{self.grid.n_space}, {state})"


__all__ = ["PricingEngine"]
