"""
Market model: coefficients, strategy closure, payoffs and pointwise
quantities shared by the simulator, the PIDE solver and the hedge.

All dynamics are in proportional form:

    dS/S = (mu + lambda*eta) dt + (sigma + lambda*zeta) dW
           + (a*sigma + b*lambda*zeta) dM
    dtheta = eta dt + zeta (dW + b dM)

where M = N - rho*t is the compensated Poisson process. A jump multiplies
the price by the jump factor ``1 + a*sigma + b*lambda*zeta``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .coefficients import CoefficientFunction, CoefficientSpec, Constant, make_coefficient
from .errors import JumpFactorError, ModelValidationError, Violation

if TYPE_CHECKING:
    from .pide import GridSpec

logger = logging.getLogger(__name__)

ClosureMode = Literal["exogenous", "self-consistent"]
PayoffKind = Literal["call", "put", "table"]

# Offending nodes listed per invariant before the report only counts them
MAX_LISTED_VIOLATIONS = 1000


def _coefficient_field(obj: Any, name: str) -> None:
    object.__setattr__(obj, name, make_coefficient(getattr(obj, name)))


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """
    Every market coefficient plus the initial conditions.

    Coefficients accept anything ``make_coefficient`` understands, so a
    plain float means a constant. Scalar fields are only checked for
    finiteness here; the model invariants are checked by
    ``validate_params`` against a grid and a strategy closure.

    Attributes:
        mu: Expected return per unit time, proportional form.
        sigma: Volatility per square-root time.
        r: Risk-free short rate.
        lambda_impact: Price impact of the trader's own order flow.
        rho: Jump intensity (expected jumps per unit time).
        a: Scales sigma inside the jump.
        b: Scales lambda*zeta inside the jump.
        s0: Initial asset price.
        theta0: Initial share count.
        T: Maturity.
    """

    mu: CoefficientSpec = 0.05
    sigma: CoefficientSpec = 0.2
    r: CoefficientSpec = 0.05
    lambda_impact: CoefficientSpec = 0.0
    rho: float = 0.0
    a: float = 0.0
    b: float = 0.0
    s0: float = 100.0
    theta0: float = 0.0
    T: float = 1.0

    def __post_init__(self) -> None:
        for name in ("mu", "sigma", "r", "lambda_impact"):
            _coefficient_field(self, name)
        for name in ("rho", "a", "b", "s0", "theta0", "T"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))

    # Typed accessors; the fields hold CoefficientFunction after __post_init__
    @property
    def mu_fn(self) -> CoefficientFunction:
        return self.mu  # type: ignore[return-value]

    @property
    def sigma_fn(self) -> CoefficientFunction:
        return self.sigma  # type: ignore[return-value]

    @property
    def r_fn(self) -> CoefficientFunction:
        return self.r  # type: ignore[return-value]

    @property
    def lambda_fn(self) -> CoefficientFunction:
        return self.lambda_impact  # type: ignore[return-value]

    @property
    def has_jumps(self) -> bool:
        return self.rho > 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "mu": self.mu_fn.to_dict(),
            "sigma": self.sigma_fn.to_dict(),
            "r": self.r_fn.to_dict(),
            "lambda_impact": self.lambda_fn.to_dict(),
            "rho": self.rho,
            "a": self.a,
            "b": self.b,
            "s0": self.s0,
            "theta0": self.theta0,
            "T": self.T,
        }


@dataclass(frozen=True)
class StrategyClosure:
    """
    Trading-rate processes closing the forward system.

    In ``exogenous`` mode both rates are the given functions. In
    ``self-consistent`` mode eta is taken as given while zeta is produced
    from the hedge surface by the fixed point
    ``zeta = sigma*S*theta_S / (1 - lambda*S*theta_S)``; the ``zeta``
    function then serves as the starting guess.
    """

    eta: CoefficientSpec = 0.0
    zeta: CoefficientSpec = 0.0
    mode: ClosureMode = "exogenous"

    def __post_init__(self) -> None:
        _coefficient_field(self, "eta")
        _coefficient_field(self, "zeta")
        if self.mode not in ("exogenous", "self-consistent"):
            raise ValueError(
                f"Closure mode must be 'exogenous' or 'self-consistent', got {self.mode!r}"
            )

    @property
    def eta_fn(self) -> CoefficientFunction:
        return self.eta  # type: ignore[return-value]

    @property
    def zeta_fn(self) -> CoefficientFunction:
        return self.zeta  # type: ignore[return-value]

    @property
    def self_consistent(self) -> bool:
        return self.mode == "self-consistent"

    def rates(self, t: ArrayLike, S: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Return (eta, zeta) evaluated at (t, S)."""
        return self.eta_fn(t, S), self.zeta_fn(t, S)

    def to_dict(self) -> dict[str, Any]:
        return {"eta": self.eta_fn.to_dict(), "zeta": self.zeta_fn.to_dict(), "mode": self.mode}


@dataclass(frozen=True)
class Payoff:
    """
    European payoff.

    ``call`` and ``put`` use ``strike``. ``table`` is piecewise-linear
    through the knots ``(s, values)``; the first knot must be 0 and the
    last segment extends linearly to infinity.
    """

    kind: PayoffKind = "call"
    strike: float = 100.0
    s: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("call", "put", "table"):
            raise ValueError(f"Unknown payoff kind {self.kind!r}")
        object.__setattr__(self, "strike", _require_finite("strike", self.strike))
        object.__setattr__(self, "s", tuple(float(x) for x in self.s))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))

        if self.kind in ("call", "put"):
            if self.strike <= 0:
                raise ModelValidationError(
                    f"Strike must be positive, got {self.strike}",
                    [Violation("strike > 0", f"strike = {self.strike}")],
                )
            return

        s_arr = np.asarray(self.s)
        v_arr = np.asarray(self.values)
        if s_arr.size < 2 or s_arr.shape != v_arr.shape:
            raise ValueError("Table payoff needs at least two knots and matching values")
        if not (np.all(np.isfinite(s_arr)) and np.all(np.isfinite(v_arr))):
            raise ValueError("Table payoff knots and values must be finite")
        if s_arr[0] != 0.0:
            raise ValueError(f"Table payoff must start at S = 0, got {s_arr[0]}")
        if np.any(np.diff(s_arr) <= 0):
            raise ValueError("Table payoff knots must be strictly increasing")

    @property
    def reference_price(self) -> float:
        """Strike for vanillas, the last knot for tables; sets the grid scale."""
        if self.kind == "table":
            return self.s[-1]
        return self.strike

    @property
    def alignment_strike(self) -> float | None:
        """Price to place on a grid node, if any."""
        return None if self.kind == "table" else self.strike

    def asymptote(self) -> tuple[float, float]:
        """
        Linear behaviour of the payoff as S grows.

        Returns:
            ``(slope, intercept)`` with ``h(S) = slope*S + intercept`` for
            large S.
        """
        if self.kind == "call":
            return 1.0, -self.strike
        if self.kind == "put":
            return 0.0, 0.0
        slope = (self.values[-1] - self.values[-2]) / (self.s[-1] - self.s[-2])
        return slope, self.values[-1] - slope * self.s[-1]

    def value_at_zero(self) -> float:
        if self.kind == "call":
            return 0.0
        if self.kind == "put":
            return self.strike
        return self.values[0]

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "table":
            d.update(s=list(self.s), values=list(self.values))
        else:
            d["strike"] = self.strike
        return d


def _finite_array(name: str, x: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _scalar_or_array(x: NDArray[np.float64]) -> Any:
    return float(x) if x.ndim == 0 else x


def payoff_eval(p: Payoff, S: ArrayLike) -> Any:
    """
    Evaluate the payoff exactly.

    Args:
        p: Payoff description.
        S: Terminal price(s), S >= 0.

    Returns:
        A float for scalar input, otherwise an array of the input's shape.

    Raises:
        ValueError: If S is negative or not finite.
    """
    s = _finite_array("S", S)
    if np.any(s < 0):
        raise ValueError("Payoff is defined for S >= 0 only")

    if p.kind == "call":
        out = np.maximum(s - p.strike, 0.0)
    elif p.kind == "put":
        out = np.maximum(p.strike - s, 0.0)
    else:
        knots = np.asarray(p.s)
        vals = np.asarray(p.values)
        slope, intercept = p.asymptote()
        out = np.where(s <= knots[-1], np.interp(s, knots, vals), slope * s + intercept)
    return _scalar_or_array(np.asarray(out, dtype=np.float64))


def drift(params: ModelParams, t: ArrayLike, S: ArrayLike, eta: ArrayLike) -> NDArray[np.float64]:
    """Proportional drift mu + lambda*eta."""
    return params.mu_fn(t, S) + params.lambda_fn(t, S) * np.asarray(eta, dtype=np.float64)


def volatility(
    params: ModelParams, t: ArrayLike, S: ArrayLike, zeta: ArrayLike
) -> NDArray[np.float64]:
    """Brownian loading sigma + lambda*zeta."""
    return params.sigma_fn(t, S) + params.lambda_fn(t, S) * np.asarray(zeta, dtype=np.float64)


def jump_loading(
    params: ModelParams, t: ArrayLike, S: ArrayLike, zeta: ArrayLike
) -> NDArray[np.float64]:
    """Compensated-jump loading a*sigma + b*lambda*zeta."""
    return params.a * params.sigma_fn(t, S) + params.b * params.lambda_fn(t, S) * np.asarray(
        zeta, dtype=np.float64
    )


def jump_factor(params: ModelParams, t: ArrayLike, S: ArrayLike, zeta: ArrayLike) -> Any:
    """
    Multiplicative price displacement at a jump, ``1 + a*sigma + b*lambda*zeta``.

    The simulator and the PIDE's nonlocal term both call this function.

    Args:
        params: Model parameters.
        t: Time(s).
        S: Price(s), S > 0.
        zeta: Strategy diffusion loading(s).

    Returns:
        A float for scalar inputs, otherwise an array of the broadcast shape.

    Raises:
        ValueError: If any input is not finite or S <= 0.
        JumpFactorError: If any factor is not strictly positive.
    """
    t_arr = _finite_array("t", t)
    s_arr = _finite_array("S", S)
    z_arr = _finite_array("zeta", zeta)
    if np.any(s_arr <= 0):
        raise ValueError("jump_factor requires S > 0")

    factor = 1.0 + jump_loading(params, t_arr, s_arr, z_arr)
    bad = factor <= 0
    if np.any(bad):
        tt, ss, _ = np.broadcast_arrays(t_arr, s_arr, factor)
        violations = [
            Violation("jump factor <= 0", f"factor = {f:.6g}", t=float(ti), s=float(si))
            for ti, si, f in zip(tt[bad][:20], ss[bad][:20], factor[bad][:20])
        ]
        raise JumpFactorError(
            f"jump factor <= 0 at {int(np.count_nonzero(bad))} point(s), "
            f"min factor {float(factor.min()):.6g}",
            violations,
        )
    return _scalar_or_array(factor)


def model_fingerprint(params: ModelParams, closure: StrategyClosure) -> str:
    """SHA-256 of the canonical description of (params, closure)."""
    blob = json.dumps(
        {"params": params.to_dict(), "closure": closure.to_dict()},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ValidationReport:
    """
    Outcome of ``validate_params``.

    ``violations`` lists offending points, at most ``MAX_LISTED_VIOLATIONS``
    per invariant; ``counts`` holds the full number per invariant.
    """

    violations: list[Violation] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def invariants(self) -> list[str]:
        return list(self.counts)

    def add(self, invariant: str, detail: str, t: float | None = None, s: float | None = None) -> None:
        n = self.counts.get(invariant, 0)
        self.counts[invariant] = n + 1
        if n < MAX_LISTED_VIOLATIONS:
            self.violations.append(Violation(invariant, detail, t, s))

    def add_mask(
        self,
        invariant: str,
        mask: NDArray[np.bool_],
        tt: NDArray[np.float64],
        ss: NDArray[np.float64],
        values: NDArray[np.float64],
        label: str,
    ) -> None:
        if not np.any(mask):
            return
        n_bad = int(np.count_nonzero(mask))
        listed = self.counts.get(invariant, 0)
        room = max(MAX_LISTED_VIOLATIONS - listed, 0)
        for ti, si, vi in zip(tt[mask][:room], ss[mask][:room], values[mask][:room]):
            self.violations.append(Violation(invariant, f"{label} = {vi:.6g}", float(ti), float(si)))
        self.counts[invariant] = listed + n_bad

    def raise_if_invalid(self) -> None:
        """Raise ModelValidationError carrying the violations, if any."""
        if self.ok:
            return
        summary = "; ".join(f"{name} ({n} point(s))" for name, n in self.counts.items())
        raise ModelValidationError(f"Model validation failed: {summary}", self.violations)

    def __str__(self) -> str:
        if self.ok:
            return "model valid"
        return "\n".join(str(v) for v in self.violations)


def validate_params(
    params: ModelParams,
    grid: GridSpec,
    closure: StrategyClosure,
    payoff: Payoff | None = None,
) -> ValidationReport:
    """
    Check every model invariant across a grid.

    Scalar invariants (s0 > 0, T > 0, rho >= 0, theta0 >= 0) are checked
    first; if they hold, sigma > 0, r >= 0, lambda >= 0 and the jump
    factor are checked at every (t, S) node with S > 0. In
    self-consistent mode the closure's zeta is only the starting guess,
    so the solver re-checks jump factors as zeta is updated.

    Args:
        params: Model parameters.
        grid: Grid over which to check.
        closure: Strategy closure supplying zeta.
        payoff: When given, the grid is strike-aligned as the solver does.

    Returns:
        A ValidationReport listing each violated invariant with the
        offending (t, S).
    """
    report = ValidationReport()
    if params.s0 <= 0:
        report.add("s0 > 0", f"s0 = {params.s0}")
    if params.T <= 0:
        report.add("T > 0", f"T = {params.T}")
    if params.rho < 0:
        report.add("rho >= 0", f"rho = {params.rho}")
    if params.theta0 < 0:
        report.add("theta0 >= 0", f"theta0 = {params.theta0}")
    if not report.ok:
        return report

    s_nodes = grid.s_nodes(payoff)[1:]
    t_nodes = grid.t_nodes(params.T)
    tt, ss = np.meshgrid(t_nodes, s_nodes, indexing="ij")

    sigma = params.sigma_fn(tt, ss)
    report.add_mask("sigma > 0", ~(sigma > 0), tt, ss, sigma, "sigma")
    r = params.r_fn(tt, ss)
    report.add_mask("r >= 0", ~(r >= 0), tt, ss, r, "r")
    lam = params.lambda_fn(tt, ss)
    report.add_mask("lambda >= 0", ~(lam >= 0), tt, ss, lam, "lambda")

    factor = 1.0 + jump_loading(params, tt, ss, closure.zeta_fn(tt, ss))
    report.add_mask("jump factor <= 0", ~(factor > 0), tt, ss, factor, "factor")

    if report.ok:
        logger.debug(f"Model valid on {tt.size} grid nodes")
    else:
        logger.info(f"Model validation found {sum(report.counts.values())} violation(s)")
    return report


def validate_step_size(
    params: ModelParams,
    closure: StrategyClosure,
    n_steps: int,
    s_grid: Sequence[float] | NDArray[np.float64] | None = None,
) -> ValidationReport:
    """
    Check the simulator's positivity rule for a step count.

    A step size is rejected where ``|drift*dt| + |loading|*4*sqrt(dt) >= 1``
    at any probed node, ``drift`` being the compensated drift
    ``mu + lambda*eta - rho*(J - 1)`` and ``loading`` the Brownian loading
    ``sigma + lambda*zeta``.

    Args:
        params: Model parameters.
        closure: Strategy closure.
        n_steps: Number of time steps over [0, T].
        s_grid: Price nodes to probe; defaults to 64 points on
            [s0/4, 4*s0].

    Returns:
        ValidationReport with a "step size" entry per offending node.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    dt = params.T / n_steps
    s_probe = (
        np.linspace(params.s0 / 4.0, 4.0 * params.s0, 64)
        if s_grid is None
        else np.asarray(s_grid, dtype=np.float64)
    )
    t_probe = np.linspace(0.0, params.T, min(n_steps, 64) + 1)
    tt, ss = np.meshgrid(t_probe, s_probe, indexing="ij")

    eta, zeta = closure.rates(tt, ss)
    comp_drift = drift(params, tt, ss, eta) - params.rho * jump_loading(params, tt, ss, zeta)
    loading = volatility(params, tt, ss, zeta)
    size = np.abs(comp_drift * dt) + np.abs(loading) * 4.0 * math.sqrt(dt)

    report = ValidationReport()
    report.add_mask("step size", size >= 1.0, tt, ss, size, "|drift*dt| + 4|loading|sqrt(dt)")
    return report


def default_closure() -> StrategyClosure:
    """Exogenous closure with eta = zeta = 0."""
    return StrategyClosure(eta=Constant(0.0), zeta=Constant(0.0))


__all__ = [
    "ModelParams",
    "StrategyClosure",
    "Payoff",
    "ValidationReport",
    "payoff_eval",
    "drift",
    "volatility",
    "jump_loading",
    "jump_factor",
    "validate_params",
    "validate_step_size",
    "model_fingerprint",
    "default_closure",
]
