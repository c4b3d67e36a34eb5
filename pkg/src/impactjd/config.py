"""
Run configuration.

One TOML file describes one run::

    schema_version = 1
    command = "price"          # price | hedge | simulate | validate
    output_dir = "out"

    [model]
    sigma = 0.2
    lambda_impact = {kind = "affine", intercept = 0.0, slope = 0.0005}

    [grid]
    s_max = 300.0
    n_space = 400
    n_time = 400

    [payoff]
    kind = "call"
    strike = 100.0

    [simulation]
    n_paths = 10000
    n_steps = 200
    seed = 7

Parsing is strict: unknown keys and blocks raise ConfigError before any
computation starts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Literal, Mapping, TypeVar

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .model import ModelParams, Payoff, StrategyClosure
from .pide import GridSpec, SolverSettings

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

Command = Literal["price", "hedge", "simulate", "validate"]
COMMANDS: tuple[str, ...] = ("price", "hedge", "simulate", "validate")

ALL_CHECKS: tuple[str, ...] = (
    "martingale",
    "quadratic_variation",
    "ito_residual",
    "vertex_equivalence",
    "theta_reduction",
    "black_scholes_reduction",
    "liu_yong_reduction",
    "variance_optimality",
    "incompleteness",
    "self_financing",
    "determinism",
    "put_call_parity",
)

_TOP_KEYS = frozenset(
    {
        "schema_version",
        "command",
        "output_dir",
        "model",
        "closure",
        "grid",
        "payoff",
        "simulation",
        "hedge",
        "solver",
        "validate",
    }
)
_MODEL_KEYS = frozenset({"mu", "sigma", "r", "lambda_impact", "rho", "a", "b", "s0", "theta0", "T"})
_CLOSURE_KEYS = frozenset({"eta", "zeta", "mode"})
_GRID_KEYS = frozenset({"s_max", "n_space", "n_time", "align_strike"})
_PAYOFF_KEYS = frozenset({"kind", "strike", "s", "values"})
_SIMULATION_KEYS = frozenset({"n_paths", "n_steps", "seed"})
_HEDGE_KEYS = frozenset({"perturbations", "include_zero", "step_counts"})
_SOLVER_KEYS = frozenset(
    {"picard_tol", "picard_max_iter", "zeta_tol", "zeta_max_iter", "zeta_damping", "zeta_floor", "strict"}
)
_VALIDATE_KEYS = frozenset(
    {
        "checks",
        "martingale_paths",
        "martingale_steps",
        "ito_paths",
        "ito_step_counts",
        "vertex_contexts",
        "hedge_paths",
        "hedge_steps",
        "bs_tolerance",
        "seed",
    }
)

_REQUIRED_BLOCKS: dict[str, tuple[str, ...]] = {
    "price": ("model", "payoff"),
    "hedge": ("model", "payoff", "simulation"),
    "simulate": ("model", "simulation"),
    "validate": (),
}

_T = TypeVar("_T")


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo sizes and the run seed."""

    n_paths: int
    n_steps: int
    seed: int


@dataclass(frozen=True)
class HedgeConfig:
    """Strategy variants compared by the hedge command."""

    perturbations: tuple[float, ...] = (0.05,)
    include_zero: bool = True
    step_counts: tuple[int, ...] = ()


@dataclass(frozen=True)
class ValidateConfig:
    """Checks run by the validate command and their sizes."""

    checks: tuple[str, ...] = ALL_CHECKS
    martingale_paths: int = 100_000
    martingale_steps: int = 50
    ito_paths: int = 1000
    ito_step_counts: tuple[int, ...] = (100, 200, 400, 800)
    vertex_contexts: int = 1000
    hedge_paths: int = 10_000
    hedge_steps: int = 200
    bs_tolerance: float = 0.005
    seed: int = 20240607


@dataclass(frozen=True)
class RunConfig:
    """
    One experiment.

    ``source`` keeps the parsed TOML document; its canonical JSON dump is
    what ``fingerprint`` hashes.
    """

    command: Command
    output_dir: Path
    model: ModelParams
    closure: StrategyClosure
    grid: GridSpec
    payoff: Payoff
    simulation: SimulationConfig | None
    hedge: HedgeConfig = field(default_factory=HedgeConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    source: Mapping[str, Any] = field(default_factory=dict, repr=False, compare=False)

    @property
    def seed(self) -> int | None:
        return self.simulation.seed if self.simulation is not None else None

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form of the configuration."""
        blob = json.dumps(self.source, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> RunConfig:
        """
        Copy with the run seed replaced (CLI ``--seed``).

        ``validate`` runs take the seed into ``[validate]``; the other
        commands need a ``[simulation]`` block to carry it.
        """
        _check_seed(seed)
        source = {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in self.source.items()}
        if self.command == "validate":
            source.setdefault("validate", {})["seed"] = seed
            return replace(self, validate=replace(self.validate, seed=seed), source=source)
        if self.simulation is None:
            raise ConfigError("--seed given but the configuration has no [simulation] block")
        source.setdefault("simulation", {})["seed"] = seed
        return replace(self, simulation=replace(self.simulation, seed=seed), source=source)

    def with_output_dir(self, path: str | Path) -> RunConfig:
        return replace(self, output_dir=Path(path))


def _check_seed(seed: Any) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return seed


def _block(data: Mapping[str, Any], name: str, allowed: frozenset[str]) -> dict[str, Any]:
    raw = data.get(name, {})
    if not isinstance(raw, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{name}]: {sorted(unknown)}")
    return dict(raw)


def _build(name: str, factory: Callable[..., _T], kwargs: Mapping[str, Any]) -> _T:
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid [{name}] block: {e}") from e


def _int(name: str, value: Any, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def _sequence(name: str, value: Any) -> tuple[Any, ...]:
    if isinstance(value, (str, bytes)) or not isinstance(value, (list, tuple)):
        raise ConfigError(f"{name} must be an array, got {value!r}")
    return tuple(value)


def parse_config(data: Mapping[str, Any], source: str = "<config>") -> RunConfig:
    """
    Validate a parsed TOML document into a RunConfig.

    Args:
        data: The document as nested mappings.
        source: Name used in error messages.

    Returns:
        The validated RunConfig.

    Raises:
        ConfigError: On any schema violation.
    """
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown top-level key(s) {sorted(unknown)}")

    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{source}: schema_version must be {SCHEMA_VERSION}, got {version!r}")

    command = data.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"{source}: command must be one of {list(COMMANDS)}, got {command!r}")

    for name in _REQUIRED_BLOCKS[command]:
        if name not in data:
            raise ConfigError(f"{source}: command {command!r} needs a [{name}] block")

    closure_kw = _block(data, "closure", _CLOSURE_KEYS)
    if closure_kw.get("mode") == "self-consistent":
        for name in ("grid", "payoff"):
            if name not in data:
                raise ConfigError(f"{source}: self-consistent closure needs a [{name}] block")

    model = _build("model", ModelParams, _block(data, "model", _MODEL_KEYS))
    closure = _build("closure", StrategyClosure, closure_kw)
    grid = _build("grid", GridSpec, _block(data, "grid", _GRID_KEYS))
    payoff_kw = _block(data, "payoff", _PAYOFF_KEYS)
    for key in ("s", "values"):
        if key in payoff_kw:
            payoff_kw[key] = _sequence(key, payoff_kw[key])
    payoff = _build("payoff", Payoff, payoff_kw)
    try:
        grid.price_step(payoff)
    except ValueError as e:
        raise ConfigError(f"{source}: [grid] does not fit the payoff: {e}") from e
    solver = _build("solver", SolverSettings, _block(data, "solver", _SOLVER_KEYS))

    simulation = None
    if "simulation" in data:
        sim_kw = _block(data, "simulation", _SIMULATION_KEYS)
        if "seed" not in sim_kw:
            raise ConfigError(f"{source}: [simulation] seed is mandatory")
        simulation = SimulationConfig(
            n_paths=_int("n_paths", sim_kw.get("n_paths", 10_000), 1),
            n_steps=_int("n_steps", sim_kw.get("n_steps", 200), 1),
            seed=_check_seed(sim_kw["seed"]),
        )
        if command == "hedge" and simulation.n_paths < 2:
            raise ConfigError(
                f"{source}: hedge needs n_paths >= 2 for a standard error, got {simulation.n_paths}"
            )

    hedge_kw = _block(data, "hedge", _HEDGE_KEYS)
    try:
        hedge = HedgeConfig(
            perturbations=tuple(float(x) for x in hedge_kw.get("perturbations", (0.05,))),
            include_zero=bool(hedge_kw.get("include_zero", True)),
            step_counts=tuple(_int("step_counts", n, 1) for n in hedge_kw.get("step_counts", ())),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{source}: invalid [hedge] block: {e}") from e
    if any(e < 0 for e in hedge.perturbations):
        raise ConfigError(f"{source}: [hedge] perturbations must be >= 0")

    validate_kw = _block(data, "validate", _VALIDATE_KEYS)
    checks = _sequence("checks", validate_kw.pop("checks", ALL_CHECKS))
    unknown_checks = set(checks) - set(ALL_CHECKS)
    if unknown_checks:
        raise ConfigError(f"{source}: unknown check(s) {sorted(unknown_checks)}")
    if "ito_step_counts" in validate_kw:
        counts = _sequence("ito_step_counts", validate_kw["ito_step_counts"])
        if len(counts) < 2:
            raise ConfigError(f"{source}: [validate] ito_step_counts needs at least two entries")
        validate_kw["ito_step_counts"] = tuple(_int("ito_step_counts", n, 1) for n in counts)
    for name in ("martingale_paths", "martingale_steps", "ito_paths", "vertex_contexts", "hedge_steps"):
        if name in validate_kw:
            _int(name, validate_kw[name], 1)
    if "hedge_paths" in validate_kw:
        _int("hedge_paths", validate_kw["hedge_paths"], 2)
    tolerance = validate_kw.get("bs_tolerance", 0.005)
    if isinstance(tolerance, bool) or not isinstance(tolerance, (int, float)) or not tolerance > 0:
        raise ConfigError(f"{source}: [validate] bs_tolerance must be a positive number, got {tolerance!r}")
    if "seed" in validate_kw:
        _check_seed(validate_kw["seed"])
    validate = _build("validate", ValidateConfig, {"checks": checks, **validate_kw})

    return RunConfig(
        command=command,
        output_dir=Path(str(data.get("output_dir", "out"))),
        model=model,
        closure=closure,
        grid=grid,
        payoff=payoff,
        simulation=simulation,
        hedge=hedge,
        solver=solver,
        validate=validate,
        source=data,
    )


def load_config(path: str | Path) -> RunConfig:
    """
    Read and validate a TOML run configuration.

    Raises:
        ConfigError: If the file is missing, unreadable, not valid TOML, or
            violates the schema.
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}") from e

    config = parse_config(data, source=str(path))
    logger.info(f"Loaded {config.command} config from {path} ({config.fingerprint()[:12]})")
    return config


__all__ = [
    "SCHEMA_VERSION",
    "COMMANDS",
    "ALL_CHECKS",
    "SimulationConfig",
    "HedgeConfig",
    "ValidateConfig",
    "RunConfig",
    "parse_config",
    "load_config",
]
