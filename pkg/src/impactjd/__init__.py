from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("impact-jd")
except PackageNotFoundError:
    # Source checkout without an install
    from ._version import __version__

from .coefficients import AffineInS, CoefficientFunction, Constant, TableInterpolated, make_coefficient
from .core import PricingEngine
from .errors import (
    CheckFailure,
    ConfigError,
    DegenerateHedgeError,
    ImpactJDError,
    IncompatibleSurfaceError,
    JumpFactorError,
    ModelValidationError,
    NumericalError,
)
from .hedge import HedgeContext, replication_error, replication_errors, theta_oracle, theta_star
from .model import ModelParams, Payoff, StrategyClosure, jump_factor, payoff_eval, validate_params
from .oracles import BsInputs, black_scholes_price, lognormal_quadrature_price
from .pide import GridSpec, PriceSurface, SolverSettings, reduce_to_liu_yong_check, solve_pide
from .simulate import PathBundle, evolve_wealth, ito_residual, simulate_coupled_system

__all__ = [
    "PricingEngine",
    "ModelParams",
    "StrategyClosure",
    "Payoff",
    "GridSpec",
    "SolverSettings",
    "PriceSurface",
    "PathBundle",
    "HedgeContext",
    "BsInputs",
    "CoefficientFunction",
    "Constant",
    "AffineInS",
    "TableInterpolated",
    "make_coefficient",
    "jump_factor",
    "payoff_eval",
    "validate_params",
    "simulate_coupled_system",
    "evolve_wealth",
    "ito_residual",
    "solve_pide",
    "reduce_to_liu_yong_check",
    "theta_star",
    "theta_oracle",
    "replication_error",
    "replication_errors",
    "black_scholes_price",
    "lognormal_quadrature_price",
    "ImpactJDError",
    "ConfigError",
    "IncompatibleSurfaceError",
    "ModelValidationError",
    "JumpFactorError",
    "NumericalError",
    "DegenerateHedgeError",
    "CheckFailure",
    "__version__",
]
