"""
Independent reference prices.

``black_scholes_price`` is the closed form; ``lognormal_quadrature_price``
integrates the discounted payoff against the lognormal terminal law and
serves as the brute-force check of the closed form. The normal CDF is
``scipy.special.ndtr``, which is built on the double-precision erf/erfc
pair and is accurate to about 1e-16 absolute.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import ndtr

logger = logging.getLogger(__name__)

OptionKind = Literal["call", "put"]

# Standard-normal truncation for the quadrature
Z_RANGE = 10.0


@dataclass(frozen=True)
class BsInputs:
    """
    Black-Scholes inputs with constant rate and volatility.

    Raises:
        ValueError: If any input is not finite or S, K, sigma <= 0 or tau < 0.
    """

    S: float
    K: float
    r: float
    sigma: float
    tau: float

    def __post_init__(self) -> None:
        for name in ("S", "K", "r", "sigma", "tau"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.S <= 0 or self.K <= 0:
            raise ValueError(f"S and K must be positive, got S={self.S}, K={self.K}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")


def _intrinsic(inputs: BsInputs, kind: OptionKind) -> float:
    if kind == "call":
        return max(inputs.S - inputs.K, 0.0)
    return max(inputs.K - inputs.S, 0.0)


def black_scholes_price(inputs: BsInputs, kind: OptionKind = "call") -> float:
    """
    Closed-form European option value.

    Args:
        inputs: Validated inputs.
        kind: "call" or "put".

    Returns:
        The option value; the payoff when tau = 0.
    """
    if kind not in ("call", "put"):
        raise ValueError(f"kind must be 'call' or 'put', got {kind!r}")
    if inputs.tau == 0.0:
        return _intrinsic(inputs, kind)

    S, K, r, sigma, tau = inputs.S, inputs.K, inputs.r, inputs.sigma, inputs.tau
    vol = sigma * math.sqrt(tau)
    d1 = (math.log(S / K) + (r + 0.5 * sigma**2) * tau) / vol
    d2 = d1 - vol
    disc = math.exp(-r * tau)
    if kind == "call":
        return float(S * ndtr(d1) - K * disc * ndtr(d2))
    return float(K * disc * ndtr(-d2) - S * ndtr(-d1))


def lognormal_quadrature_price(
    inputs: BsInputs, n_points: int = 1_000_000, kind: OptionKind = "call"
) -> float:
    """
    Discounted expected payoff by trapezoidal quadrature.

    The terminal price is ``S*exp((r - sigma**2/2)*tau + sigma*sqrt(tau)*z)``
    with z standard normal. The integral is taken on the side of the
    payoff kink where the payoff is positive, so the integrand is smooth.
    The upper limit is pushed to ``10 + sigma*sqrt(tau)`` so that the
    shifted mass of the share-measure term is covered.

    Args:
        inputs: Validated inputs.
        n_points: Number of quadrature nodes (>= 1000).
        kind: "call" or "put".

    Returns:
        The quadrature value.
    """
    if n_points < 1000:
        raise ValueError(f"n_points must be >= 1000, got {n_points}")
    if kind not in ("call", "put"):
        raise ValueError(f"kind must be 'call' or 'put', got {kind!r}")
    if inputs.tau == 0.0:
        return _intrinsic(inputs, kind)

    S, K, r, sigma, tau = inputs.S, inputs.K, inputs.r, inputs.sigma, inputs.tau
    vol = sigma * math.sqrt(tau)
    drift = (r - 0.5 * sigma**2) * tau
    kink = (math.log(K / S) - drift) / vol
    lo_all, hi_all = -Z_RANGE, Z_RANGE + vol

    if kind == "call":
        lo, hi = max(kink, lo_all), hi_all
        sign = 1.0
    else:
        lo, hi = lo_all, min(kink, hi_all)
        sign = -1.0
    if hi <= lo:
        return 0.0

    z = np.linspace(lo, hi, n_points)
    terminal = S * np.exp(drift + vol * z)
    integrand = sign * (terminal - K) * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    value = math.exp(-r * tau) * float(trapezoid(integrand, z))
    logger.debug(f"Quadrature on [{lo:.4f}, {hi:.4f}] with {n_points} nodes: {value:.12g}")
    return value


def put_call_parity_gap(inputs: BsInputs) -> float:
    """call - put - (S - K*exp(-r*tau)) from the closed forms."""
    call = black_scholes_price(inputs, "call")
    put = black_scholes_price(inputs, "put")
    return call - put - (inputs.S - inputs.K * math.exp(-inputs.r * inputs.tau))


__all__ = [
    "BsInputs",
    "black_scholes_price",
    "lognormal_quadrature_price",
    "put_call_parity_gap",
]
