"""
Variance-minimizing hedge.

At each state the hedging loss is the quadratic

    l(x) = (sigma + lambda*zeta)**2 S**2 (f_S - x)**2
           + rho (f(S*J) - f - x S (a*sigma + b*lambda*zeta))**2

whose vertex is the closed-form hedge ``theta_star``. ``theta_oracle``
locates the same vertex by bracketing and ternary search, and the Monte
Carlo replication functions measure E[(h(S_T) - V_T)**2] for hedging
policies sharing one set of paths.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, DegenerateHedgeError, IncompatibleSurfaceError
from .model import ModelParams, StrategyClosure, model_fingerprint, payoff_eval
from .simulate import PathBundle, evolve_wealth, simulate_coupled_system

if TYPE_CHECKING:
    from .pide import PriceSurface

logger = logging.getLogger(__name__)

ORACLE_MAX_ITER = 200


@dataclass(frozen=True)
class HedgeContext:
    """
    Arguments of the closed-form hedge at one or many states.

    Every field may be a scalar or an array; arrays broadcast together.
    """

    S: ArrayLike
    f: ArrayLike
    f_S: ArrayLike
    f_jumped: ArrayLike
    sigma: ArrayLike
    lam: ArrayLike = 0.0
    zeta: ArrayLike = 0.0
    a: float = 0.0
    b: float = 0.0
    rho: float = 0.0

    @property
    def vol(self) -> NDArray[np.float64]:
        return np.asarray(self.sigma, dtype=np.float64) + np.asarray(self.lam) * np.asarray(self.zeta)

    @property
    def loading(self) -> NDArray[np.float64]:
        return self.a * np.asarray(self.sigma, dtype=np.float64) + self.b * np.asarray(
            self.lam
        ) * np.asarray(self.zeta)

    @property
    def jump_change(self) -> NDArray[np.float64]:
        return np.asarray(self.f_jumped, dtype=np.float64) - np.asarray(self.f, dtype=np.float64)

    def denominator(self) -> NDArray[np.float64]:
        """(sigma + lambda*zeta)**2 S**2 + rho S**2 (a*sigma + b*lambda*zeta)**2."""
        S = np.asarray(self.S, dtype=np.float64)
        return self.vol**2 * S**2 + self.rho * S**2 * self.loading**2


def _check_degenerate(ctx: HedgeContext, den: NDArray[np.float64]) -> None:
    bad = ~(den > 0)
    if not np.any(bad):
        return
    S = np.broadcast_to(np.asarray(ctx.S, dtype=np.float64), den.shape)
    vol = np.broadcast_to(ctx.vol, den.shape)
    if np.any(bad & (S == 0)):
        factor = "S = 0"
    elif np.any(bad & (vol == 0)):
        factor = "sigma + lambda*zeta = 0 with no jump loading"
    else:
        factor = "non-finite or negative denominator"
    raise DegenerateHedgeError(
        f"Hedge denominator vanishes at {int(np.count_nonzero(bad))} state(s): {factor}"
    )


def _as_output(x: NDArray[np.float64]) -> Any:
    return float(x) if x.ndim == 0 else x


def theta_star(ctx: HedgeContext) -> Any:
    """
    Closed-form variance-minimizing share count.

    Args:
        ctx: Hedge arguments at one or many states.

    Returns:
        ``[vol**2 S**2 f_S + rho S loading (f_jumped - f)] / denominator``,
        a float for scalar contexts.

    Raises:
        DegenerateHedgeError: If the denominator is not positive.
    """
    # Evaluated as f_S plus the jump correction, which vanishes exactly
    # when rho = 0 or the jump loading is zero.
    S = np.asarray(ctx.S, dtype=np.float64)
    f_s = np.asarray(ctx.f_S, dtype=np.float64)
    loading = ctx.loading
    den = np.asarray(ctx.denominator())
    _check_degenerate(ctx, den)
    correction = ctx.rho * S * loading * (ctx.jump_change - S * loading * f_s) / den
    return _as_output(np.asarray(f_s + correction))


def hedge_loss(ctx: HedgeContext, x: ArrayLike) -> Any:
    """Evaluate the hedging quadratic l(x)."""
    S = np.asarray(ctx.S, dtype=np.float64)
    x_arr = np.asarray(x, dtype=np.float64)
    diffusion = ctx.vol**2 * S**2 * (np.asarray(ctx.f_S) - x_arr) ** 2
    jumps = ctx.rho * (ctx.jump_change - x_arr * S * ctx.loading) ** 2
    return _as_output(np.asarray(diffusion + jumps))


def _residual_terms(ctx: HedgeContext) -> list[tuple[float, float, float]]:
    # l(x) = sum w * (c - x*d)**2
    S = float(np.asarray(ctx.S))
    vol = float(ctx.vol)
    loading = float(ctx.loading)
    return [
        (1.0, vol * S * float(np.asarray(ctx.f_S)), vol * S),
        (float(ctx.rho), float(ctx.jump_change), S * loading),
    ]


def theta_oracle(ctx: HedgeContext) -> float:
    """
    Minimize l(x) numerically.

    A bracket around f_S is widened until the slope of l changes sign
    across it, then narrowed by ternary search. Losses at the two probes
    are compared through the exact difference of squares, so the
    comparison keeps full precision near the vertex.

    Args:
        ctx: Scalar hedge context.

    Returns:
        Midpoint of the final bracket.

    Raises:
        DegenerateHedgeError: If l is not strictly convex.
        ValueError: If ctx holds arrays.
    """
    if any(np.ndim(v) for v in (ctx.S, ctx.f, ctx.f_S, ctx.f_jumped, ctx.sigma, ctx.lam, ctx.zeta)):
        raise ValueError("theta_oracle takes a scalar context")
    _check_degenerate(ctx, np.asarray(ctx.denominator()))
    terms = _residual_terms(ctx)

    def slope(x: float) -> float:
        return -sum(w * d * (c - x * d) for w, c, d in terms)

    def first_is_worse(m1: float, m2: float) -> bool:
        # sign of l(m1) - l(m2) for m1 < m2
        return sum(w * d * (2.0 * c - (m1 + m2) * d) for w, c, d in terms) > 0

    centre = float(np.asarray(ctx.f_S))
    half = max(1.0, abs(centre))
    lo, hi = centre - half, centre + half
    while not (slope(lo) <= 0.0 <= slope(hi)):
        half *= 2.0
        lo, hi = centre - half, centre + half
        if not math.isfinite(half):
            raise DegenerateHedgeError("Could not bracket the hedge loss minimum")

    for _ in range(ORACLE_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if hi - lo <= max(1e-12, 4.0 * np.finfo(float).eps * abs(mid)):
            break
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if first_is_worse(m1, m2):
            lo = m1
        else:
            hi = m2
    else:
        logger.warning(f"theta_oracle hit {ORACLE_MAX_ITER} iterations, width {hi - lo:.3e}")
    return 0.5 * (lo + hi)


class ThetaPolicy(ABC):
    """
    A rule giving the share count held along simulated paths.

    Example:
        ```python
        class HalfDelta(ThetaPolicy):
            label = "half_delta"

            def __init__(self, surface):
                self.surface = surface

            def holdings(self, bundle):
                return 0.5 * SurfacePolicy(self.surface).holdings(bundle)
        ```
    """

    label: str = "policy"

    @abstractmethod
    def holdings(self, bundle: PathBundle) -> NDArray[np.float64]:
        """
        Share counts at every time node.

        Args:
            bundle: Simulated paths.

        Returns:
            Array of shape ``(n_paths, n_steps + 1)``.
        """
        pass


class SurfacePolicy(ThetaPolicy):
    """Hold theta(t, S) read from the solved surface by bilinear interpolation."""

    label = "theta_star"

    def __init__(self, surface: PriceSurface) -> None:
        self.surface = surface

    def holdings(self, bundle: PathBundle) -> NDArray[np.float64]:
        out = np.empty_like(bundle.S)
        for k, tk in enumerate(bundle.t):
            out[:, k] = self.surface.theta_at(tk, bundle.S[:, k])
        return out


class ConstantPolicy(ThetaPolicy):
    """Hold a fixed number of shares."""

    def __init__(self, value: float) -> None:
        self.value = float(value)
        self.label = "zero" if self.value == 0.0 else f"constant{self.value:+g}"

    def holdings(self, bundle: PathBundle) -> NDArray[np.float64]:
        return np.full_like(bundle.S, self.value)


class PerturbedPolicy(ThetaPolicy):
    """
    Surface hedge shifted by a constant.

    Args:
        surface: Solved price surface.
        epsilon: Size of the shift (>= 0).
        direction: +1 or -1.
    """

    def __init__(self, surface: PriceSurface, epsilon: float, direction: int = 1) -> None:
        if direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {direction}")
        if epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        self.base = SurfacePolicy(surface)
        self.epsilon = float(epsilon)
        self.direction = direction
        sign = "+" if direction > 0 else "-"
        self.label = f"theta_star{sign}{self.epsilon:g}"

    @property
    def shift(self) -> float:
        return self.direction * self.epsilon

    def holdings(self, bundle: PathBundle) -> NDArray[np.float64]:
        return self.base.holdings(bundle) + self.shift


@dataclass(frozen=True)
class ReplicationReport:
    """Monte Carlo estimate of E[(h(S_T) - V_T)**2] for one policy."""

    strategy: str
    estimate: float
    stderr: float
    n_paths: int
    n_steps: int
    seed: int
    mean_shortfall: float = 0.0

    def as_row(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "seed": self.seed,
        }


def combined_stderr(first: ReplicationReport, second: ReplicationReport) -> float:
    """sqrt(se1**2 + se2**2), the scale for comparing two estimates."""
    return math.hypot(first.stderr, second.stderr)


def check_surface_compatible(
    params: ModelParams, closure: StrategyClosure, surface: PriceSurface
) -> None:
    """Raise IncompatibleSurfaceError if the surface was solved for other inputs."""
    expected = model_fingerprint(params, closure)
    if surface.fingerprint != expected:
        raise IncompatibleSurfaceError(
            f"Surface fingerprint {surface.fingerprint[:12]} does not match "
            f"simulation fingerprint {expected[:12]}"
        )


def replication_errors(
    params: ModelParams,
    closure: StrategyClosure,
    policies: Sequence[ThetaPolicy],
    surface: PriceSurface,
    n_paths: int,
    n_steps: int,
    seed: int,
    workers: int | None = None,
) -> list[ReplicationReport]:
    """
    Replication error of several policies on common random numbers.

    One set of paths is simulated; each policy's wealth starts from the
    premium f(0, s0) and is evolved along those paths.

    Raises:
        ConfigError: If n_paths < 2.
        IncompatibleSurfaceError: If the surface was solved under other
            params or closure.
    """
    if n_paths < 2:
        raise ConfigError(f"n_paths must be >= 2 for a standard error, got {n_paths}")
    check_surface_compatible(params, closure, surface)

    V0 = surface.spot_price()
    bundle = simulate_coupled_system(
        params,
        closure,
        n_paths,
        n_steps,
        seed,
        surface=surface if closure.self_consistent else None,
        workers=workers,
    )
    payoff = np.asarray(payoff_eval(surface.payoff, bundle.S[:, -1]))

    reports = []
    for policy in policies:
        wealth = evolve_wealth(bundle, params, closure, V0=V0, holdings=policy.holdings(bundle))
        assert wealth.V is not None
        shortfall = payoff - wealth.V[:, -1]
        sq = shortfall**2
        report = ReplicationReport(
            strategy=policy.label,
            estimate=float(sq.mean()),
            stderr=float(sq.std(ddof=1) / math.sqrt(n_paths)),
            n_paths=n_paths,
            n_steps=n_steps,
            seed=seed,
            mean_shortfall=float(shortfall.mean()),
        )
        logger.info(
            f"{report.strategy}: E[Pi^2] = {report.estimate:.6g} +/- {report.stderr:.2g}"
        )
        reports.append(report)
    return reports


def replication_error(
    params: ModelParams,
    closure: StrategyClosure,
    theta_policy: ThetaPolicy,
    surface: PriceSurface,
    n_paths: int,
    n_steps: int,
    seed: int,
    workers: int | None = None,
) -> ReplicationReport:
    """Replication error of a single policy; see ``replication_errors``."""
    return replication_errors(
        params, closure, [theta_policy], surface, n_paths, n_steps, seed, workers
    )[0]


__all__ = [
    "HedgeContext",
    "theta_star",
    "theta_oracle",
    "hedge_loss",
    "ThetaPolicy",
    "SurfacePolicy",
    "ConstantPolicy",
    "PerturbedPolicy",
    "ReplicationReport",
    "combined_stderr",
    "check_surface_compatible",
    "replication_error",
    "replication_errors",
]
