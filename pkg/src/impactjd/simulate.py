"""
Forward simulation of the coupled price / strategy / wealth system.

Each path draws from its own counter-based Philox stream keyed by
``(seed, path_index)``, so a bundle is reproducible regardless of how the
paths are scheduled across worker threads.

Stepping (left-point coefficients, per path):

    x      = (mu + lambda*eta - rho*(J - 1)) dt + (sigma + lambda*zeta) dW
    S_pre  = S * (1 + x)
    S'     = S_pre * J**dN
    theta' = theta + eta dt + zeta (dW + b (dN - rho dt))
    A'     = A * exp(r dt)
"""

from __future__ import annotations

import logging
import math
import os
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from numpy.typing import ArrayLike, NDArray

from .coefficients import CoefficientFunction, CoefficientSpec, make_coefficient
from .errors import ConfigError, IncompatibleSurfaceError, NumericalError
from .model import (
    ModelParams,
    StrategyClosure,
    drift,
    jump_factor,
    model_fingerprint,
    validate_step_size,
    volatility,
)

if TYPE_CHECKING:
    from .pide import PriceSurface

logger = logging.getLogger(__name__)

MAX_WORKERS_ENV = "IMPACTJD_MAX_WORKERS"

# Paths drawn per worker task
_CHUNK_PATHS = 1024


def max_workers() -> int:
    """
    Worker cap for drawing random streams.

    Read from the ``IMPACTJD_MAX_WORKERS`` environment variable, falling
    back to the CPU count.
    """
    raw = os.environ.get(MAX_WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{MAX_WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{MAX_WORKERS_ENV} must be a positive integer, got {value}")
    return value


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """
    Random generator for one path.

    Args:
        seed: Run seed, 0 <= seed < 2**64.
        path_index: Index of the path, 0 <= path_index < 2**64.

    Returns:
        A Philox-backed Generator whose key packs (path_index, seed).
    """
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    if not 0 <= path_index < 2**64:
        raise ValueError(f"path_index must be in [0, 2**64), got {path_index}")
    return np.random.Generator(np.random.Philox(key=(path_index << 64) | seed))


def draw_increments(
    seed: int,
    n_paths: int,
    n_steps: int,
    dt: float,
    rho: float,
    workers: int | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """
    Draw Brownian increments and Poisson jump counts for every path.

    Each path consumes ``n_steps`` normals followed by ``n_steps`` Poisson
    counts from its own stream. Chunks of paths are filled concurrently
    into preallocated arrays.

    Returns:
        ``(dW, dN)`` of shape ``(n_paths, n_steps)``.
    """
    dW = np.empty((n_paths, n_steps), dtype=np.float64)
    dN = np.empty((n_paths, n_steps), dtype=np.int64)
    sqrt_dt = math.sqrt(dt)
    lam = rho * dt

    def fill(bounds: tuple[int, int]) -> None:
        lo, hi = bounds
        for i in range(lo, hi):
            gen = path_generator(seed, i)
            dW[i] = gen.standard_normal(n_steps) * sqrt_dt
            dN[i] = gen.poisson(lam, n_steps)

    chunks = [(lo, min(lo + _CHUNK_PATHS, n_paths)) for lo in range(0, n_paths, _CHUNK_PATHS)]
    n_workers = min(workers or max_workers(), len(chunks)) or 1
    if n_workers == 1:
        for c in chunks:
            fill(c)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(fill, chunks))

    logger.debug(f"Drew {n_paths} x {n_steps} increments on {n_workers} worker(s)")
    return dW, dN


@dataclass(frozen=True, eq=False)
class PathBundle:
    """
    Simulated trajectories.

    Arrays indexed by time have shape ``(n_paths, n_steps + 1)``; per-step
    arrays (increments and the coefficients used on each step) have shape
    ``(n_paths, n_steps)``. ``V`` and ``holdings`` are filled by
    ``evolve_wealth``; ``holdings`` is the share count the wealth was run
    with, which is ``theta`` unless a policy overrode it.
    """

    t: NDArray[np.float64]
    S: NDArray[np.float64]
    theta: NDArray[np.float64]
    A: NDArray[np.float64]
    N: NDArray[np.int64]
    dW: NDArray[np.float64]
    dN: NDArray[np.int64]
    eta: NDArray[np.float64]
    zeta: NDArray[np.float64]
    jump: NDArray[np.float64]
    seed: int
    dt: float
    rho: float
    fingerprint: str
    V: NDArray[np.float64] | None = None
    holdings: NDArray[np.float64] | None = None
    V0: float | None = None

    @property
    def n_paths(self) -> int:
        return int(self.S.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.S.shape[1] - 1)

    @property
    def M(self) -> NDArray[np.float64]:
        """Compensated jump process N - rho*t."""
        return self.N - self.rho * self.t[np.newaxis, :]

    @property
    def S_pre(self) -> NDArray[np.float64]:
        """Post-diffusion, pre-jump price at the end of each step."""
        return self.S[:, 1:] / self.jump**self.dN

    @property
    def psi(self) -> NDArray[np.float64]:
        """Bank-account units (V - theta*S)/A implied by the wealth."""
        if self.V is None or self.holdings is None:
            raise ValueError("Wealth has not been evolved on this bundle")
        return (self.V - self.holdings * self.S) / self.A

    def equals(self, other: PathBundle) -> bool:
        """Bit-for-bit equality of every array and scalar."""
        names = ("t", "S", "theta", "A", "N", "dW", "dN", "eta", "zeta", "jump")
        if (self.seed, self.dt, self.rho, self.fingerprint, self.V0) != (
            other.seed,
            other.dt,
            other.rho,
            other.fingerprint,
            other.V0,
        ):
            return False
        for name in names + ("V", "holdings"):
            x, y = getattr(self, name), getattr(other, name)
            if (x is None) != (y is None):
                return False
            if x is not None and not np.array_equal(x, y):
                return False
        return True


def simulate_coupled_system(
    params: ModelParams,
    closure: StrategyClosure,
    n_paths: int,
    n_steps: int,
    seed: int,
    *,
    surface: PriceSurface | None = None,
    workers: int | None = None,
    check_step_size: bool = True,
) -> PathBundle:
    """
    Euler-Maruyama simulation of the forward price and strategy equations.

    Args:
        params: Validated model parameters.
        closure: Strategy closure. In self-consistent mode zeta is read
            from ``surface``.
        n_paths: Number of paths (>= 1).
        n_steps: Number of time steps over [0, T] (>= 1).
        seed: Run seed.
        surface: Solved price surface, required in self-consistent mode.
        workers: Thread cap for drawing increments.
        check_step_size: Reject step sizes that break the positivity rule.

    Returns:
        PathBundle without wealth.

    Raises:
        ValueError: If counts are out of range.
        ConfigError: If self-consistent mode is used without a surface.
        ModelValidationError: If the step size breaks the positivity rule.
        JumpFactorError: If a realized jump factor is not positive.
        NumericalError: If a price turns non-positive during stepping.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if closure.self_consistent and surface is None:
        raise ConfigError("Self-consistent closure needs a solved surface to read zeta from")
    if check_step_size:
        validate_step_size(params, closure, n_steps).raise_if_invalid()

    dt = params.T / n_steps
    t = np.arange(n_steps + 1, dtype=np.float64) * dt
    dW, dN = draw_increments(seed, n_paths, n_steps, dt, params.rho, workers)

    S = np.empty((n_paths, n_steps + 1))
    theta = np.empty_like(S)
    A = np.empty_like(S)
    eta = np.empty((n_paths, n_steps))
    zeta = np.empty_like(eta)
    jump = np.empty_like(eta)
    S[:, 0] = params.s0
    theta[:, 0] = params.theta0
    A[:, 0] = 1.0

    for k in range(n_steps):
        tk = t[k]
        sk = S[:, k]
        eta_k = closure.eta_fn(tk, sk)
        if closure.self_consistent:
            assert surface is not None
            zeta_k = surface.zeta_at(tk, sk)
        else:
            zeta_k = closure.zeta_fn(tk, sk)
        J = np.asarray(jump_factor(params, tk, sk, zeta_k), dtype=np.float64)

        comp_drift = drift(params, tk, sk, eta_k) - params.rho * (J - 1.0)
        x = comp_drift * dt + volatility(params, tk, sk, zeta_k) * dW[:, k]
        s_pre = sk * (1.0 + x)
        if np.any(s_pre <= 0):
            bad = int(np.argmax(s_pre <= 0))
            raise NumericalError(
                f"Price lost positivity on path {bad} at t={tk:.6g} "
                f"(S={sk[bad]:.6g}, step return {x[bad]:.6g}); reduce the step size"
            )

        S[:, k + 1] = s_pre * J ** dN[:, k]
        dM = dN[:, k] - params.rho * dt
        theta[:, k + 1] = theta[:, k] + eta_k * dt + zeta_k * (dW[:, k] + params.b * dM)
        A[:, k + 1] = A[:, k] * np.exp(params.r_fn(tk, sk) * dt)
        eta[:, k] = eta_k
        zeta[:, k] = zeta_k
        jump[:, k] = J

    N = np.zeros((n_paths, n_steps + 1), dtype=np.int64)
    np.cumsum(dN, axis=1, out=N[:, 1:])

    logger.info(f"Simulated {n_paths} paths x {n_steps} steps (seed={seed})")
    return PathBundle(
        t=t,
        S=S,
        theta=theta,
        A=A,
        N=N,
        dW=dW,
        dN=dN,
        eta=eta,
        zeta=zeta,
        jump=jump,
        seed=seed,
        dt=dt,
        rho=params.rho,
        fingerprint=model_fingerprint(params, closure),
    )


def evolve_wealth(
    bundle: PathBundle,
    params: ModelParams,
    closure: StrategyClosure,
    *,
    V0: float | None = None,
    holdings: NDArray[np.float64] | None = None,
) -> PathBundle:
    """
    Step the wealth equation along the bundle's increments.

    The bank part grows with the same exact factor as the bank account and
    the risky part uses the step's price increments, so a zero position
    gives ``V = V0 * A / A[0]`` exactly:

        V' = (V - h*S) * exp(r dt)
             + h * S * (1 + (mu + lambda*eta) dt + (sigma + lambda*zeta) dW
                        - rho*(J - 1) dt)
             + h * S_pre * (J - 1) dN

    Args:
        bundle: Simulated bundle for the same params and closure.
        params: Model parameters.
        closure: Strategy closure the bundle was simulated with.
        V0: Initial wealth; defaults to ``theta0 * s0``.
        holdings: Share counts to hold, shape ``(n_paths, n_steps + 1)``;
            defaults to the simulated theta.

    Returns:
        A copy of the bundle with ``V``, ``holdings`` and ``V0`` set.

    Raises:
        IncompatibleSurfaceError: If the bundle was simulated under other
            params or closure.
        ValueError: If ``holdings`` has the wrong shape.
    """
    if bundle.fingerprint != model_fingerprint(params, closure):
        raise IncompatibleSurfaceError("Bundle was simulated with different params or closure")

    h = bundle.theta if holdings is None else np.asarray(holdings, dtype=np.float64)
    if h.shape != bundle.S.shape:
        raise ValueError(f"holdings must have shape {bundle.S.shape}, got {h.shape}")
    v0 = params.theta0 * params.s0 if V0 is None else float(V0)

    t, S, dt = bundle.t, bundle.S, bundle.dt
    s_pre = bundle.S_pre
    V = np.empty_like(S)
    V[:, 0] = v0
    for k in range(bundle.n_steps):
        sk = S[:, k]
        hk = h[:, k]
        J = bundle.jump[:, k]
        growth = np.exp(params.r_fn(t[k], sk) * dt)
        risky = sk * (
            1.0
            + drift(params, t[k], sk, bundle.eta[:, k]) * dt
            + volatility(params, t[k], sk, bundle.zeta[:, k]) * bundle.dW[:, k]
            - params.rho * (J - 1.0) * dt
        ) + s_pre[:, k] * (J - 1.0) * bundle.dN[:, k]
        V[:, k + 1] = (V[:, k] - hk * sk) * growth + hk * risky

    return replace(bundle, V=V, holdings=h, V0=v0)


@dataclass(frozen=True)
class SelfFinancingReport:
    """Gap between the wealth and the discretely rebalanced portfolio."""

    max_abs: float
    mean_path_max: float
    per_step: NDArray[np.float64] = field(repr=False)


def self_financing_residual(bundle: PathBundle) -> SelfFinancingReport:
    """
    Rebuild the self-financing portfolio psi*A + theta*S and compare to V.

    Starting from ``P_0 = V_0`` the portfolio is rebalanced at every step:
    ``P' = psi*A' + h*S'`` with ``psi = (P - h*S)/A``. Only steps with two
    or more jumps separate it from the wealth path, so the gap is O(dt).

    Returns:
        SelfFinancingReport with the sup over all paths and steps, and the
        mean over paths of each path's sup.
    """
    if bundle.V is None or bundle.holdings is None:
        raise ValueError("Wealth has not been evolved on this bundle")

    S, A, h = bundle.S, bundle.A, bundle.holdings
    P = np.empty_like(S)
    P[:, 0] = bundle.V[:, 0]
    for k in range(bundle.n_steps):
        psi = (P[:, k] - h[:, k] * S[:, k]) / A[:, k]
        P[:, k + 1] = psi * A[:, k + 1] + h[:, k] * S[:, k + 1]

    gap = np.abs(P - bundle.V)
    path_max = gap.max(axis=1)
    return SelfFinancingReport(
        max_abs=float(path_max.max()),
        mean_path_max=float(path_max.mean()),
        per_step=gap.max(axis=0),
    )


class ItoTestFunction(ABC):
    """Smooth G(t, x) with analytic partial derivatives."""

    @abstractmethod
    def value(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        pass

    @abstractmethod
    def dt(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        pass

    @abstractmethod
    def dx(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        pass

    @abstractmethod
    def dxx(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        pass


class PolynomialG(ItoTestFunction):
    """Time-independent polynomial G(x) = sum c_i x**i."""

    def __init__(self, coefficients: Sequence[float]) -> None:
        self.poly = Polynomial(coefficients)
        self._d1 = self.poly.deriv(1)
        self._d2 = self.poly.deriv(2)

    def value(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self.poly(np.asarray(x, dtype=np.float64)))

    def dt(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        return np.zeros(np.shape(x))

    def dx(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self._d1(np.asarray(x, dtype=np.float64)))

    def dxx(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self._d2(np.asarray(x, dtype=np.float64)))


class ExponentialG(ItoTestFunction):
    """G(t, x) = exp(alpha*t + beta*x)."""

    def __init__(self, alpha: float = 0.0, beta: float = 1.0) -> None:
        self.alpha = float(alpha)
        self.beta = float(beta)

    def value(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        return np.exp(self.alpha * np.asarray(t) + self.beta * np.asarray(x))

    def dt(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        return self.alpha * self.value(t, x)

    def dx(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        return self.beta * self.value(t, x)

    def dxx(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        return self.beta**2 * self.value(t, x)


@dataclass(frozen=True)
class ItoIntegrandSpec:
    """
    Integrands of dX = g dt + l dW + k dM and the test function G.

    The integrands are coefficient functions of (t, X).
    """

    g: CoefficientSpec
    l: CoefficientSpec
    k: CoefficientSpec
    G: ItoTestFunction
    x0: float = 0.0
    rho: float = 0.0
    T: float = 1.0

    def __post_init__(self) -> None:
        for name in ("g", "l", "k"):
            object.__setattr__(self, name, make_coefficient(getattr(self, name)))
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.T <= 0:
            raise ValueError(f"T must be > 0, got {self.T}")

    @property
    def g_fn(self) -> CoefficientFunction:
        return self.g  # type: ignore[return-value]

    @property
    def l_fn(self) -> CoefficientFunction:
        return self.l  # type: ignore[return-value]

    @property
    def k_fn(self) -> CoefficientFunction:
        return self.k  # type: ignore[return-value]


@dataclass(frozen=True)
class ItoResidualReport:
    """
    Pathwise gap between G(t, X_t) and its discretized Ito expansion.

    ``terms`` holds the mean absolute size of each accumulated term at T:
    ``drift``, ``brownian``, ``correction`` (second-order Brownian term),
    ``jump`` (pathwise jump sum), ``compensator`` and ``jump_mismatch``
    (difference between the direct jump change and the jump term).
    """

    per_path: NDArray[np.float64] = field(repr=False)
    mean: float
    n_steps: int
    terms: dict[str, float]


def ito_residual(
    spec: ItoIntegrandSpec,
    n_paths: int,
    n_steps: int,
    seed: int,
    workers: int | None = None,
) -> ItoResidualReport:
    """
    Check the Ito formula with jumps numerically along simulated paths.

    X is stepped with the Milstein-corrected scheme

        X_pre = X + (g - k*rho) dt + l dW + 0.5*l*l_x*(dW**2 - dt)
        X'    = X_pre + k dN

    and G(t_n, X_n) - G(0, x0) is compared with the running sum of

        [G_t + (g - k*rho) G_x + 0.5 l**2 G_xx + rho (G(X+k) - G(X))] dt
        + l G_x dW + 0.5 l (l_x G_x + l G_xx)(dW**2 - dt)
        + [G(X_pre + k dN) - G(X_pre)] - rho dt [G(X+k) - G(X)].

    Returns:
        ItoResidualReport with the per-path sup over t of the gap and its
        sample mean.
    """
    if n_paths < 1 or n_steps < 1:
        raise ValueError("n_paths and n_steps must be >= 1")

    dt = spec.T / n_steps
    dW, dN = draw_increments(seed, n_paths, n_steps, dt, spec.rho, workers)
    G, rho = spec.G, spec.rho

    X = np.full(n_paths, float(spec.x0))
    g0 = G.value(0.0, X)
    acc = np.zeros(n_paths)
    sums = {name: np.zeros(n_paths) for name in ("drift", "brownian", "correction", "jump", "compensator", "jump_mismatch")}
    worst = np.zeros(n_paths)

    for k in range(n_steps):
        tk = k * dt
        t_next = (k + 1) * dt
        g = spec.g_fn(tk, X)
        l = spec.l_fn(tk, X)
        l_x = spec.l_fn.derivative_s(tk, X)
        jk = spec.k_fn(tk, X)
        dw = dW[:, k]
        dn = dN[:, k]
        dw2 = dw * dw - dt

        x_pre = X + (g - jk * rho) * dt + l * dw + 0.5 * l * l_x * dw2
        x_next = x_pre + jk * dn

        gx = G.dx(tk, X)
        gxx = G.dxx(tk, X)
        level = G.value(tk, X + jk) - G.value(tk, X)

        drift_term = (G.dt(tk, X) + (g - jk * rho) * gx + 0.5 * l * l * gxx + rho * level) * dt
        brownian = l * gx * dw
        correction = 0.5 * l * (l_x * gx + l * gxx) * dw2
        jump_term = G.value(t_next, x_pre + jk * dn) - G.value(t_next, x_pre)
        compensator = -rho * dt * level

        acc += drift_term + brownian + correction + jump_term + compensator
        direct = G.value(t_next, x_next) - g0
        worst = np.maximum(worst, np.abs(direct - acc))

        sums["drift"] += drift_term
        sums["brownian"] += brownian
        sums["correction"] += correction
        sums["jump"] += jump_term
        sums["compensator"] += compensator
        sums["jump_mismatch"] += (G.value(t_next, x_next) - G.value(t_next, x_pre)) - jump_term
        X = x_next

    terms = {name: float(np.mean(np.abs(v))) for name, v in sums.items()}
    logger.debug(f"Ito residual at n_steps={n_steps}: mean {worst.mean():.3e}")
    return ItoResidualReport(per_path=worst, mean=float(worst.mean()), n_steps=n_steps, terms=terms)


def ito_convergence_slope(
    spec: ItoIntegrandSpec,
    n_paths: int,
    step_counts: Sequence[int],
    seed: int,
    workers: int | None = None,
) -> tuple[float, list[ItoResidualReport]]:
    """
    Fit the convergence order of the Ito residual.

    Runs ``ito_residual`` at each step count and fits the slope of
    log2(mean residual) against log2(dt).

    Returns:
        ``(slope, reports)``.
    """
    if len(step_counts) < 2:
        raise ValueError("Need at least two step counts to fit a slope")
    reports = [ito_residual(spec, n_paths, n, seed, workers) for n in step_counts]
    log_dt = np.log2([spec.T / n for n in step_counts])
    log_res = np.log2([max(r.mean, np.finfo(float).tiny) for r in reports])
    slope = float(np.polyfit(log_dt, log_res, 1)[0])
    logger.info(f"Ito residual convergence slope {slope:.3f} over {list(step_counts)}")
    return slope, reports


__all__ = [
    "MAX_WORKERS_ENV",
    "max_workers",
    "path_generator",
    "draw_increments",
    "PathBundle",
    "StrategyClosure",
    "simulate_coupled_system",
    "evolve_wealth",
    "SelfFinancingReport",
    "self_financing_residual",
    "ItoTestFunction",
    "PolynomialG",
    "ExponentialG",
    "ItoIntegrandSpec",
    "ItoResidualReport",
    "ito_residual",
    "ito_convergence_slope",
]
