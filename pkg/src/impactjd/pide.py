"""
Backward finite-difference solver for the pricing PIDE with hedge coupling.

The equation solved for f(t, S), with terminal condition f(T, S) = h(S), is

    f_t + (mu + lambda*eta - rho*(J - 1)) S f_S
        + 0.5 (sigma + lambda*zeta)**2 S**2 f_SS
        + rho (f(t, S*J) - f) - r f - (mu - r + lambda*eta) theta S = 0

where J is the jump factor and theta the variance-minimizing hedge read
off the current surface.

Each time step is an implicit-explicit split: diffusion, convection and
discounting are implicit (one tridiagonal solve), the nonlocal jump term
uses the later time level, and the hedge coupling is iterated to a fixed
point (Picard) within the step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from .errors import NumericalError
from .hedge import HedgeContext, theta_star
from .model import (
    ModelParams,
    Payoff,
    StrategyClosure,
    jump_factor,
    model_fingerprint,
    payoff_eval,
    validate_params,
)

logger = logging.getLogger(__name__)

# Surface values below -NEGATIVITY_TOL * K are flagged
NEGATIVITY_TOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform time-price grid.

    Attributes:
        s_max: Upper price boundary; ``None`` means three times the
            payoff's reference price.
        n_space: Number of price intervals.
        n_time: Number of time steps.
        align_strike: Place the strike on a node. The price step becomes
            ``K / floor(K * n_space / s_max)``, which moves the upper
            boundary up to at most one step.
    """

    s_max: float | None = None
    n_space: int = 400
    n_time: int = 400
    align_strike: bool = True

    def __post_init__(self) -> None:
        if self.n_space < 4:
            raise ValueError(f"n_space must be >= 4, got {self.n_space}")
        if self.n_time < 1:
            raise ValueError(f"n_time must be >= 1, got {self.n_time}")
        if self.s_max is not None and not (math.isfinite(self.s_max) and self.s_max > 0):
            raise ValueError(f"s_max must be positive and finite, got {self.s_max}")

    def price_step(self, payoff: Payoff | None = None) -> float:
        """Price step after strike alignment."""
        if self.s_max is None:
            if payoff is None:
                raise ValueError("GridSpec without s_max needs a payoff to scale from")
            s_max = 3.0 * payoff.reference_price
        else:
            s_max = self.s_max

        strike = payoff.alignment_strike if payoff is not None else None
        if not self.align_strike or strike is None:
            return s_max / self.n_space
        if strike >= s_max:
            raise ValueError(f"s_max={s_max} must exceed the strike {strike}")
        m = max(1, math.floor(strike * self.n_space / s_max))
        return strike / m

    def s_nodes(self, payoff: Payoff | None = None) -> NDArray[np.float64]:
        return np.arange(self.n_space + 1, dtype=np.float64) * self.price_step(payoff)

    def t_nodes(self, T: float) -> NDArray[np.float64]:
        return np.arange(self.n_time + 1, dtype=np.float64) * (T / self.n_time)

    def to_dict(self) -> dict[str, Any]:
        return {
            "s_max": self.s_max,
            "n_space": self.n_space,
            "n_time": self.n_time,
            "align_strike": self.align_strike,
        }


@dataclass(frozen=True)
class SolverSettings:
    """Iteration controls for the per-step couplings."""

    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    zeta_tol: float = 1e-10
    zeta_max_iter: int = 100
    zeta_damping: float = 0.5
    zeta_floor: float = 0.1
    strict: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "picard_tol": self.picard_tol,
            "picard_max_iter": self.picard_max_iter,
            "zeta_tol": self.zeta_tol,
            "zeta_max_iter": self.zeta_max_iter,
            "zeta_damping": self.zeta_damping,
            "zeta_floor": self.zeta_floor,
            "strict": self.strict,
        }


@dataclass
class SolveDiagnostics:
    """Iteration and stability record of one solve."""

    picard_iterations: NDArray[np.int64]
    picard_deltas: NDArray[np.float64]
    nonconverged_steps: list[int] = field(default_factory=list)
    zeta_iterations_max: int = 0
    zeta_floor_hits: int = 0
    upwind_rows: int = 0
    monotone: bool = True
    monotonicity_notes: list[str] = field(default_factory=list)
    min_value: float = 0.0
    negative: bool = False
    min_jump_factor: float = 1.0

    @property
    def converged(self) -> bool:
        return not self.nonconverged_steps

    def summary(self) -> dict[str, Any]:
        return {
            "picard_max": int(self.picard_iterations.max(initial=0)),
            "picard_last_delta": float(self.picard_deltas.max(initial=0.0)),
            "nonconverged": len(self.nonconverged_steps),
            "zeta_max": self.zeta_iterations_max,
            "zeta_floor_hits": self.zeta_floor_hits,
            "upwind_rows": self.upwind_rows,
            "monotone": self.monotone,
            "negative": self.negative,
        }


@dataclass(frozen=True, eq=False)
class PriceSurface:
    """
    Option value f(t, S) on the grid with its hedge and strategy loading.

    Arrays ``f``, ``theta`` and ``zeta`` have shape ``(n_time + 1,
    n_space + 1)``; row j belongs to ``t[j]``. ``fingerprint`` identifies
    the (params, closure) pair the surface was solved for.
    """

    t: NDArray[np.float64]
    S: NDArray[np.float64]
    f: NDArray[np.float64]
    theta: NDArray[np.float64]
    zeta: NDArray[np.float64]
    params: ModelParams
    closure: StrategyClosure
    payoff: Payoff
    grid: GridSpec
    fingerprint: str
    diagnostics: SolveDiagnostics = field(compare=False)
    discount_max: NDArray[np.float64] = field(repr=False)
    _interpolators: dict[str, RegularGridInterpolator] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    @property
    def ds(self) -> float:
        return float(self.S[1] - self.S[0])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def _interp(self, name: str, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        if name not in self._interpolators:
            self._interpolators[name] = RegularGridInterpolator(
                (self.t, self.S), getattr(self, name), method="linear"
            )
        t_arr, s_arr = np.broadcast_arrays(
            np.clip(np.asarray(t, dtype=np.float64), self.t[0], self.t[-1]),
            np.clip(np.asarray(S, dtype=np.float64), self.S[0], self.S[-1]),
        )
        pts = np.stack([t_arr.ravel(), s_arr.ravel()], axis=-1)
        return np.asarray(self._interpolators[name](pts)).reshape(t_arr.shape)

    def value_at(self, t: ArrayLike, S: ArrayLike) -> Any:
        """
        Bilinear value of f; prices above the grid use the linear asymptote.
        """
        t_arr, s_arr = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(S, dtype=np.float64))
        out = self._interp("f", t_arr, s_arr)
        above = s_arr > self.S[-1]
        if np.any(above):
            slope, intercept = self.payoff.asymptote()
            disc = np.interp(t_arr[above], self.t, self.discount_max)
            out[above] = slope * s_arr[above] + intercept * disc
        return float(out) if out.ndim == 0 else out

    def theta_at(self, t: ArrayLike, S: ArrayLike) -> Any:
        """Bilinear hedge; S is clamped to the grid."""
        out = self._interp("theta", t, S)
        return float(out) if out.ndim == 0 else out

    def zeta_at(self, t: ArrayLike, S: ArrayLike) -> Any:
        """Bilinear strategy loading; S is clamped to the grid."""
        out = self._interp("zeta", t, S)
        return float(out) if out.ndim == 0 else out

    def spot_price(self) -> float:
        """f(0, s0)."""
        return float(self.value_at(0.0, self.params.s0))


def first_derivative(values: NDArray[np.float64], ds: float) -> NDArray[np.float64]:
    """
    d/dS on a uniform grid.

    Central differences on nodes 2..n-2; second-order one-sided stencils
    on nodes 0, 1, n-1 and n.
    """
    v = values
    out = np.empty_like(v)
    out[2:-2] = (v[3:-1] - v[1:-3]) / (2.0 * ds)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * ds)
    out[1] = (-3.0 * v[1] + 4.0 * v[2] - v[3]) / (2.0 * ds)
    out[-2] = (3.0 * v[-2] - 4.0 * v[-3] + v[-4]) / (2.0 * ds)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * ds)
    return out


def _interp_with_asymptote(
    x: NDArray[np.float64],
    nodes: NDArray[np.float64],
    values: NDArray[np.float64],
    slope: float,
    intercept: float,
) -> NDArray[np.float64]:
    inside = np.interp(x, nodes, values)
    return np.where(x > nodes[-1], slope * x + intercept, inside)


class PideSolver:
    """
    Solver for one (params, closure, grid, payoff) set.

    Args:
        params: Model parameters.
        closure: Strategy closure (exogenous or self-consistent).
        grid: Grid specification.
        payoff: European payoff.
        settings: Iteration controls.

    Raises:
        ModelValidationError: If the model breaks an invariant on the grid.
    """

    def __init__(
        self,
        params: ModelParams,
        closure: StrategyClosure,
        grid: GridSpec,
        payoff: Payoff,
        settings: SolverSettings | None = None,
    ) -> None:
        validate_params(params, grid, closure, payoff).raise_if_invalid()

        self.params = params
        self.closure = closure
        self.grid = grid
        self.payoff = payoff
        self.settings = settings or SolverSettings()

        self.S = grid.s_nodes(payoff)
        self.t = grid.t_nodes(params.T)
        self.ds = float(self.S[1])
        self.dt = params.T / grid.n_time
        self.scale = payoff.reference_price
        self.slope, self.intercept = payoff.asymptote()

        # Discount factors exp(-int_t^T r du) at both boundaries
        self.discount_zero = self._boundary_discount(self.S[0])
        self.discount_max = self._boundary_discount(self.S[-1])

        self._upwind_rows = 0
        self._zeta_iter_max = 0
        self._zeta_hits = 0
        self._min_jump = math.inf

    def _boundary_discount(self, s_b: float) -> NDArray[np.float64]:
        r_vals = self.params.r_fn(self.t, s_b)
        tail = cumulative_trapezoid(r_vals[::-1], dx=self.dt, initial=0.0)[::-1]
        return np.exp(-tail)

    def _boundaries(self, j: int) -> tuple[float, float]:
        low = self.payoff.value_at_zero() * self.discount_zero[j]
        high = self.slope * self.S[-1] + self.intercept * self.discount_max[j]
        return float(low), float(high)

    def _theta(
        self,
        g: NDArray[np.float64],
        j: int,
        J: NDArray[np.float64],
        zeta: NDArray[np.float64],
        sigma: NDArray[np.float64],
        lam: NDArray[np.float64],
    ) -> NDArray[np.float64]:
        """Closed-form hedge on every node of the level held in ``g``."""
        S_int = self.S[1:-1]
        f_s = first_derivative(g, self.ds)
        f_jumped = _interp_with_asymptote(
            S_int * J, self.S, g, self.slope, self.intercept * self.discount_max[j]
        )
        ctx = HedgeContext(
            S=S_int,
            f=g[1:-1],
            f_S=f_s[1:-1],
            f_jumped=f_jumped,
            sigma=sigma[1:-1],
            lam=lam[1:-1],
            zeta=zeta[1:-1],
            a=self.params.a,
            b=self.params.b,
            rho=self.params.rho,
        )
        theta = np.empty_like(g)
        theta[1:-1] = theta_star(ctx)
        theta[0] = f_s[0]
        theta[-1] = f_s[-1]
        return theta

    def _jump(self, j: int, zeta: NDArray[np.float64]) -> NDArray[np.float64]:
        J = np.asarray(jump_factor(self.params, self.t[j], self.S[1:-1], zeta[1:-1]))
        self._min_jump = min(self._min_jump, float(J.min()))
        return J

    def _self_consistent_zeta(
        self,
        g: NDArray[np.float64],
        j: int,
        zeta0: NDArray[np.float64],
        sigma: NDArray[np.float64],
        lam: NDArray[np.float64],
    ) -> NDArray[np.float64]:
        """Fixed point zeta = sigma*S*theta_S / (1 - lambda*S*theta_S)."""
        st = self.settings
        zeta = zeta0.copy()
        prev = math.inf
        floored = np.zeros(zeta.shape, dtype=bool)
        for it in range(1, st.zeta_max_iter + 1):
            J = self._jump(j, zeta)
            theta_s = first_derivative(self._theta(g, j, J, zeta, sigma, lam), self.ds)
            den = 1.0 - lam * self.S * theta_s
            floored = den < st.zeta_floor
            new = sigma * self.S * theta_s / np.where(floored, st.zeta_floor, den)
            delta = float(np.max(np.abs(new - zeta)))
            weight = st.zeta_damping if delta > prev else 1.0
            zeta = zeta + weight * (new - zeta)
            prev = delta
            if delta < st.zeta_tol:
                break
        else:
            logger.warning(
                f"zeta fixed point not converged at t={self.t[j]:.6g} "
                f"after {st.zeta_max_iter} iterations (delta {prev:.3e})"
            )
        self._zeta_iter_max = max(self._zeta_iter_max, it)
        if np.any(floored):
            self._zeta_hits += int(np.count_nonzero(floored))
            logger.debug(f"zeta denominator floored at {int(np.count_nonzero(floored))} node(s)")
        return zeta

    def _implicit_matrix(
        self, v: NDArray[np.float64], c: NDArray[np.float64], r: NDArray[np.float64]
    ) -> tuple[NDArray[np.float64], float, float]:
        """
        Banded form of I - dt*L for the interior nodes.

        Returns the (3, n-1) band matrix and the lower/upper boundary
        couplings dt*alpha_1 and dt*gamma_{n-1}.
        """
        i = np.arange(1, self.grid.n_space, dtype=np.float64)
        diff = 0.5 * v**2 * i**2
        conv = 0.5 * c * i
        alpha = diff - conv
        gamma = diff + conv

        # First-order upwinding where the central stencil loses positivity
        upwind = (alpha < 0) | (gamma < 0)
        if np.any(upwind):
            fwd = upwind & (c > 0)
            bwd = upwind & (c <= 0)
            alpha = np.where(fwd, diff, np.where(bwd, diff - c * i, alpha))
            gamma = np.where(fwd, diff + c * i, np.where(bwd, diff, gamma))
            self._upwind_rows += int(np.count_nonzero(upwind))
        beta = -alpha - gamma - r

        ab = np.zeros((3, i.size))
        ab[0, 1:] = -self.dt * gamma[:-1]
        ab[1, :] = 1.0 - self.dt * beta
        ab[2, :-1] = -self.dt * alpha[1:]
        return ab, float(self.dt * alpha[0]), float(self.dt * gamma[-1])

    def _probe_monotonicity(self, diag: SolveDiagnostics) -> None:
        rho_dt = self.params.rho * self.dt
        if rho_dt > 1.0:
            diag.monotone = False
            note = f"rho*dt = {rho_dt:.3g} > 1: explicit jump term is not monotone"
            diag.monotonicity_notes.append(note)
            logger.warning(note)

    def _step(
        self,
        j: int,
        f_next: NDArray[np.float64],
        zeta_guess: NDArray[np.float64],
        diag: SolveDiagnostics,
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        p, st = self.params, self.settings
        t, S = self.t[j], self.S
        S_int = S[1:-1]

        mu = p.mu_fn(t, S)
        sigma = p.sigma_fn(t, S)
        r = p.r_fn(t, S)
        lam = p.lambda_fn(t, S)
        eta = self.closure.eta_fn(t, S)
        coupling = (mu - r + lam * eta)[1:-1]
        coupled = self.closure.self_consistent or bool(np.any(coupling != 0.0))

        g = f_next.copy()
        g[0], g[-1] = self._boundaries(j)
        zeta = zeta_guess if self.closure.self_consistent else self.closure.zeta_fn(t, S)
        f_next_int = f_next[1:-1]
        tol = st.picard_tol * self.scale

        # The first step below maturity starts from the seeded zeta, not the payoff kink
        seeded = j == self.grid.n_time - 1
        delta = prev = math.inf
        n_iter = 0
        for n_iter in range(1, st.picard_max_iter + 1):
            if self.closure.self_consistent and not (seeded and n_iter == 1):
                zeta = self._self_consistent_zeta(g, j, zeta, sigma, lam)
            J = self._jump(j, zeta)

            jumped_next = _interp_with_asymptote(
                S_int * J, S, f_next, self.slope, self.intercept * self.discount_max[j + 1]
            )
            explicit = p.rho * (jumped_next - f_next_int)
            if np.any(coupling != 0.0):
                theta = self._theta(g, j, J, zeta, sigma, lam)
                explicit = explicit - coupling * theta[1:-1] * S_int

            v = (sigma + lam * zeta)[1:-1]
            c = (mu + lam * eta)[1:-1] - p.rho * (J - 1.0)
            ab, low, high = self._implicit_matrix(v, c, r[1:-1])
            rhs = f_next_int + self.dt * explicit
            rhs[0] += low * g[0]
            rhs[-1] += high * g[-1]

            solved = solve_banded((1, 1), ab, rhs)
            step = solved - g[1:-1]
            delta = float(np.max(np.abs(step)))
            weight = st.zeta_damping if self.closure.self_consistent and delta > prev else 1.0
            g[1:-1] += weight * step
            prev = delta
            if not coupled or delta < tol:
                break
        else:
            diag.nonconverged_steps.append(j)
            msg = (
                f"Picard iteration not converged at t={t:.6g} after "
                f"{st.picard_max_iter} iterations (last delta {delta:.3e})"
            )
            if st.strict:
                raise NumericalError(msg)
            logger.warning(msg)

        diag.picard_iterations[j] = n_iter
        diag.picard_deltas[j] = delta if coupled else 0.0

        if self.closure.self_consistent:
            zeta = self._self_consistent_zeta(g, j, zeta, sigma, lam)
        theta = self._theta(g, j, self._jump(j, zeta), zeta, sigma, lam)
        return g, theta, zeta

    def solve(self) -> PriceSurface:
        """
        Run the backward sweep from maturity to time zero.

        Returns:
            The solved PriceSurface.

        Raises:
            JumpFactorError: If zeta updates produce a non-positive jump factor.
            NumericalError: If Picard iteration fails in strict mode.
        """
        n_t, n_s = self.grid.n_time, self.grid.n_space
        f = np.empty((n_t + 1, n_s + 1))
        theta = np.empty_like(f)
        zeta = np.empty_like(f)
        diag = SolveDiagnostics(
            picard_iterations=np.zeros(n_t, dtype=np.int64),
            picard_deltas=np.zeros(n_t),
        )
        self._probe_monotonicity(diag)

        T = self.params.T
        f[-1] = np.asarray(payoff_eval(self.payoff, self.S))
        zeta[-1] = self.closure.zeta_fn(T, self.S)
        sigma_T = self.params.sigma_fn(T, self.S)
        lam_T = self.params.lambda_fn(T, self.S)
        theta[-1] = self._theta(f[-1], n_t, self._jump(n_t, zeta[-1]), zeta[-1], sigma_T, lam_T)

        for j in range(n_t - 1, -1, -1):
            f[j], theta[j], zeta[j] = self._step(j, f[j + 1], zeta[j + 1], diag)
            logger.debug(f"t={self.t[j]:.6g}: {diag.picard_iterations[j]} Picard iteration(s)")

        if self.closure.self_consistent:
            # zeta at maturity is undefined at the payoff kink; hold the last solved level
            zeta[-1] = zeta[-2]

        diag.upwind_rows = self._upwind_rows
        diag.zeta_iterations_max = self._zeta_iter_max
        diag.zeta_floor_hits = self._zeta_hits
        diag.min_jump_factor = self._min_jump
        diag.min_value = float(f.min())
        if diag.min_value < -NEGATIVITY_TOL * self.scale:
            diag.negative = True
            logger.warning(f"Surface has negative values down to {diag.min_value:.3e}")
        if not np.all(np.isfinite(f)):
            raise NumericalError("Surface contains non-finite values")
        if diag.zeta_floor_hits:
            logger.warning(f"zeta denominator floor hit at {diag.zeta_floor_hits} node visit(s)")
        if diag.nonconverged_steps:
            logger.warning(f"{len(diag.nonconverged_steps)} time step(s) did not converge")

        logger.info(
            f"Solved {n_t}x{n_s} grid: f(0, s0) = "
            f"{float(np.interp(self.params.s0, self.S, f[0])):.8g}"
        )
        return PriceSurface(
            t=self.t,
            S=self.S,
            f=f,
            theta=theta,
            zeta=zeta,
            params=self.params,
            closure=self.closure,
            payoff=self.payoff,
            grid=self.grid,
            fingerprint=model_fingerprint(self.params, self.closure),
            diagnostics=diag,
            discount_max=self.discount_max,
        )


def solve_pide(
    params: ModelParams,
    closure: StrategyClosure,
    grid: GridSpec,
    payoff: Payoff,
    settings: SolverSettings | None = None,
) -> PriceSurface:
    """
    Solve the pricing PIDE backward from maturity.

    Args:
        params: Model parameters.
        closure: Strategy closure.
        grid: Grid specification.
        payoff: European payoff.
        settings: Iteration controls.

    Returns:
        PriceSurface with f, theta and zeta on the full grid.

    Raises:
        ModelValidationError: If the model is invalid on the grid.
        JumpFactorError: If a jump factor turns non-positive while solving.
        NumericalError: On non-finite output, or Picard failure when strict.
    """
    return PideSolver(params, closure, grid, payoff, settings).solve()


@dataclass(frozen=True)
class LiuYongReport:
    """
    Comparison of the surface hedge with the central difference of f.

    ``tolerance`` is ``max(1e-8, 5 * dS * max|f_SS|)`` over the compared
    nodes; ``constant`` is ``max_abs_diff / dS``.
    """

    max_abs_diff: float
    constant: float
    f_ss_max: float
    tolerance: float
    ds: float
    reduction_applies: bool

    @property
    def passed(self) -> bool:
        return self.max_abs_diff <= self.tolerance


def reduce_to_liu_yong_check(surface: PriceSurface) -> LiuYongReport:
    """
    Check that the hedge reduces to f_S when the jump constants vanish.

    Compares theta with the central difference of f on nodes 2..n-2 of
    every non-terminal time level, where the hedge itself is built from
    central differences.

    Args:
        surface: Solved surface (a = b = 0 for the reduction to apply).

    Returns:
        LiuYongReport; reports rather than raises.
    """
    ds = surface.ds
    f = surface.f[:-1]
    central = (f[:, 3:-1] - f[:, 1:-3]) / (2.0 * ds)
    theta = surface.theta[:-1, 2:-2]
    f_ss = (f[:, 3:-1] - 2.0 * f[:, 2:-2] + f[:, 1:-3]) / ds**2

    diff = float(np.max(np.abs(theta - central)))
    f_ss_max = float(np.max(np.abs(f_ss)))
    applies = surface.params.a == 0.0 and surface.params.b == 0.0
    report = LiuYongReport(
        max_abs_diff=diff,
        constant=diff / ds,
        f_ss_max=f_ss_max,
        tolerance=max(1e-8, 5.0 * ds * f_ss_max),
        ds=ds,
        reduction_applies=applies,
    )
    logger.info(f"Liu-Yong check: max |theta - f_S| = {diff:.3e} (tol {report.tolerance:.3e})")
    return report


__all__ = [
    "GridSpec",
    "SolverSettings",
    "SolveDiagnostics",
    "PriceSurface",
    "PideSolver",
    "first_derivative",
    "solve_pide",
    "LiuYongReport",
    "reduce_to_liu_yong_check",
]
