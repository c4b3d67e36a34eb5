"""
Coefficient functions of (t, S) and the factory that builds them.

A coefficient is given either as a plain number (constant kind), as a
mapping with a ``kind`` key, or as an already-built instance.
"""

from __future__ import annotations

from typing import Any, Mapping, Union

from .base import CoefficientFunction
from .kinds import AffineInS, Constant, TableInterpolated

CoefficientSpec = Union[float, int, Mapping[str, Any], CoefficientFunction]

_KINDS: dict[str, tuple[type[CoefficientFunction], frozenset[str]]] = {
    "constant": (Constant, frozenset({"value"})),
    "affine": (AffineInS, frozenset({"intercept", "slope"})),
    "table": (TableInterpolated, frozenset({"s", "values"})),
}


def make_coefficient(spec: CoefficientSpec) -> CoefficientFunction:
    """
    Build a coefficient function from its description.

    Args:
        spec: A number, a mapping such as
            ``{"kind": "affine", "intercept": 0.2, "slope": 0.001}``,
            or a CoefficientFunction (returned unchanged).

    Returns:
        The corresponding CoefficientFunction.

    Raises:
        ValueError: If the kind is unknown, keys are missing or unexpected,
            or parameter values are invalid.
        TypeError: If spec has an unsupported type.
    """
    if isinstance(spec, CoefficientFunction):
        return spec
    if isinstance(spec, bool):
        raise TypeError("Coefficient cannot be a boolean")
    if isinstance(spec, (int, float)):
        return Constant(spec)
    if isinstance(spec, Mapping):
        kind = spec.get("kind")
        if kind not in _KINDS:
            raise ValueError(
                f"Unknown coefficient kind {kind!r}; expected one of {sorted(_KINDS)}"
            )
        cls, keys = _KINDS[kind]
        given = set(spec) - {"kind"}
        missing = keys - given
        extra = given - keys
        if missing:
            raise ValueError(f"Coefficient kind {kind!r} is missing {sorted(missing)}")
        if extra:
            raise ValueError(f"Coefficient kind {kind!r} got unknown keys {sorted(extra)}")
        return cls(**{k: spec[k] for k in keys})
    raise TypeError(f"Unsupported coefficient description: {type(spec).__name__}")


__all__ = [
    "CoefficientFunction",
    "CoefficientSpec",
    "Constant",
    "AffineInS",
    "TableInterpolated",
    "make_coefficient",
]
