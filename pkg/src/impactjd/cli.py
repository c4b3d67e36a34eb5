"""
Command-line front door.

Usage:
    impactjd price --config configs/bs_reduction.toml --out out/bs
    impactjd hedge --config configs/jump_hedge.toml --out out/hedge --seed 11
    impactjd simulate --config configs/simulate.toml
    impactjd validate --config configs/default.toml --verbose

Summaries go to stdout, logs to stderr. Failures print one JSON error
record to stderr and exit with the error's code (2 config, 3 model
validation, 4 numerical, 5 failed check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Sequence

import pandas as pd

from ._version import __version__
from .checks import CheckResult, CheckSuite
from .config import COMMANDS, RunConfig, load_config
from .core import PricingEngine
from .csvio import header_line, write_bundle, write_frame, write_reports, write_surface
from .errors import ConfigError, ImpactJDError
from .hedge import ReplicationReport
from .oracles import BsInputs, black_scholes_price
from .simulate import MAX_WORKERS_ENV

logger = logging.getLogger(__name__)


def _engine(config: RunConfig) -> PricingEngine:
    return PricingEngine(config.model, config.closure, config.grid, config.payoff, config.solver)


def _header(config: RunConfig, seed: int | None = None) -> str:
    return header_line(config.fingerprint(), config.seed if seed is None else seed)


def _oracle_line(config: RunConfig, price: float) -> str | None:
    """Closed-form comparison, only without jumps and impact and for constant inputs."""
    m, p = config.model, config.payoff
    if m.a != 0.0 or m.b != 0.0 or p.kind not in ("call", "put"):
        return None
    if not (m.lambda_fn.is_constant and m.sigma_fn.is_constant and m.r_fn.is_constant):
        return None
    if float(m.lambda_fn(0.0, m.s0)) != 0.0:
        return None
    inputs = BsInputs(
        S=m.s0, K=p.strike, r=float(m.r_fn(0.0, m.s0)), sigma=float(m.sigma_fn(0.0, m.s0)), tau=m.T
    )
    oracle = black_scholes_price(inputs, kind=p.kind)  # type: ignore[arg-type]
    rel = abs(price - oracle) / oracle if oracle > 0 else abs(price - oracle)
    return f"black_scholes={oracle:.10g} relative_error={rel:.3e}"


def cmd_price(config: RunConfig) -> int:
    """Solve the surface and write surface_f.csv and surface_theta.csv."""
    start = time.perf_counter()
    engine = _engine(config)
    surface = engine.surface
    elapsed = time.perf_counter() - start

    header = _header(config)
    out = config.output_dir
    write_surface(out / "surface_f.csv", surface, header, "f")
    write_surface(out / "surface_theta.csv", surface, header, "theta")
    if config.closure.self_consistent:
        write_surface(out / "surface_zeta.csv", surface, header, "zeta")

    price = surface.spot_price()
    diag = surface.diagnostics.summary()
    print(f"f(0, {config.model.s0:g}) = {price:.10g}")
    print("diagnostics: " + " ".join(f"{k}={v}" for k, v in diag.items()))
    oracle = _oracle_line(config, price)
    if oracle:
        print(oracle)
    print(f"wall_time={elapsed:.3f}s")
    return 0


def cmd_hedge(config: RunConfig) -> int:
    """Replication errors of theta*, its shifts and the zero hedge, to replication.csv."""
    assert config.simulation is not None
    sim = config.simulation
    engine = _engine(config)
    step_counts = config.hedge.step_counts or (sim.n_steps,)

    reports: list[ReplicationReport] = []
    for n_steps in step_counts:
        reports.extend(
            engine.replicate(
                sim.n_paths,
                n_steps,
                sim.seed,
                perturbations=config.hedge.perturbations,
                include_zero=config.hedge.include_zero,
            )
        )
    write_reports(config.output_dir / "replication.csv", reports, _header(config))

    print(f"premium f(0, {config.model.s0:g}) = {engine.price():.10g}")
    for r in reports:
        print(f"{r.strategy:<16} n_steps={r.n_steps:<5} E[Pi^2]={r.estimate:.6g} stderr={r.stderr:.2g}")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    """Simulate the coupled system and dump the bundle to paths.csv."""
    assert config.simulation is not None
    sim = config.simulation
    engine = _engine(config)
    bundle = engine.simulate(sim.n_paths, sim.n_steps, sim.seed)
    write_bundle(config.output_dir / "paths.csv", bundle, _header(config))

    S_T = bundle.S[:, -1]
    print(f"paths={bundle.n_paths} steps={bundle.n_steps} mean_S_T={S_T.mean():.8g} jumps={int(bundle.N[:, -1].sum())}")
    return 0


def cmd_validate(config: RunConfig) -> int:
    """Run the configured checks; raise CheckFailure if any fails."""
    suite = CheckSuite.from_names(config.validate.checks)
    results: list[CheckResult] = suite.run(config)

    rows = [row for result in results for row in result.rows()]
    frame = pd.DataFrame(rows, columns=["check", "quantity", "measured", "threshold", "passed"])
    write_frame(config.output_dir / "validate_report.csv", frame, _header(config, config.validate.seed))

    for result in results:
        print(result.summary())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} check(s) passed")
    suite.raise_on_failure(results)
    return 0


COMMAND_HANDLERS: dict[str, Callable[[RunConfig], int]] = {
    "price": cmd_price,
    "hedge": cmd_hedge,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impactjd",
        description="Option pricing and hedging with price impact and jumps",
        epilog=f"""
Examples:
  # Price surface and hedge surface as CSV
  impactjd price --config configs/bs_reduction.toml --out out/bs

  # Replication errors with common random numbers, new seed
  impactjd hedge --config configs/jump_hedge.toml --seed 11

  # Full validation suite
  impactjd validate --config configs/default.toml

Set {MAX_WORKERS_ENV} to cap the random-stream worker threads.
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument("--config", type=Path, required=True, help="TOML run configuration")
    parser.add_argument("--out", type=Path, help="Output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="Override the [simulation] seed (unsigned 64-bit)")
    parser.add_argument("--verbose", action="store_true", help="Enable verbose logging (to stderr)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def run(command: str, config: RunConfig) -> int:
    if config.command != command:
        raise ConfigError(f"Config is for {config.command!r}, not {command!r}")
    logger.info(f"Running {command} into {config.output_dir}")
    return COMMAND_HANDLERS[command](config)


def main(argv: Sequence[str] | None = None) -> int:
    """Main CLI entry point."""
    args = build_parser().parse_args(argv)

    log_level = logging.DEBUG if args.verbose else logging.WARNING
    logging.basicConfig(
        level=log_level,
        format="[%(levelname)s] %(message)s",
        stream=sys.stderr,  # stdout carries the summaries
    )

    try:
        config = load_config(args.config)
        if args.out is not None:
            config = config.with_output_dir(args.out)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        return run(args.command, config)
    except ImpactJDError as e:
        print(json.dumps(e.record()), file=sys.stderr)
        return e.exit_code


__all__ = [
    "cmd_price",
    "cmd_hedge",
    "cmd_simulate",
    "cmd_validate",
    "COMMAND_HANDLERS",
    "build_parser",
    "run",
    "main",
]
