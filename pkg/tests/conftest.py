"""Shared fixtures for the impactjd test suite."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Callable

import pytest

from impactjd.config import RunConfig, parse_config
from impactjd.model import ModelParams, Payoff, StrategyClosure
from impactjd.pide import GridSpec, PriceSurface, solve_pide

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture
def bs_params() -> ModelParams:
    """No jumps, no impact, mu = r."""
    return ModelParams(mu=0.05, sigma=0.2, r=0.05, s0=100.0, T=1.0)


@pytest.fixture
def jump_params() -> ModelParams:
    """Reference jump market: every jump multiplies S by 1.1."""
    return ModelParams(mu=0.05, sigma=0.2, r=0.05, rho=0.5, a=0.5, s0=100.0, T=1.0)


@pytest.fixture
def closure() -> StrategyClosure:
    return StrategyClosure()


@pytest.fixture
def call() -> Payoff:
    return Payoff("call", 100.0)


@pytest.fixture
def small_grid() -> GridSpec:
    return GridSpec(s_max=300.0, n_space=150, n_time=100)


@pytest.fixture
def bs_surface(bs_params: ModelParams, closure: StrategyClosure, small_grid: GridSpec, call: Payoff) -> PriceSurface:
    return solve_pide(bs_params, closure, small_grid, call)


@pytest.fixture
def jump_surface(
    jump_params: ModelParams, closure: StrategyClosure, small_grid: GridSpec, call: Payoff
) -> PriceSurface:
    return solve_pide(jump_params, closure, small_grid, call)


def _document(command: str, **blocks: Any) -> dict[str, Any]:
    doc: dict[str, Any] = {"schema_version": 1, "command": command}
    doc.update(blocks)
    return doc


@pytest.fixture
def make_document() -> Callable[..., dict[str, Any]]:
    """Build a config document: make_document("price", model={...}, ...)."""
    return _document


@pytest.fixture
def make_config(tmp_path: Path) -> Callable[..., RunConfig]:
    """Parse a config document with output under tmp_path."""

    def build(command: str, **blocks: Any) -> RunConfig:
        doc = _document(command, output_dir=str(tmp_path / "out"), **blocks)
        return parse_config(doc)

    return build


@pytest.fixture
def write_toml(tmp_path: Path) -> Callable[[str, str], Path]:
    """Write TOML text to tmp_path/name and return the path."""

    def write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write
