"""
Concrete coefficient kinds.

Three closed families cover every experiment: a constant, an affine
function of the price, and a piecewise-linear table in the price that is
clamped at its edges.
"""

from __future__ import annotations

import math
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .base import CoefficientFunction, broadcast_ts


class Constant(CoefficientFunction):
    """
    Coefficient with a single value everywhere.

    Args:
        value: The constant value.

    Raises:
        ValueError: If value is not finite.
    """

    kind = "constant"

    def __init__(self, value: float) -> None:
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"Constant coefficient must be finite, got {value}")
        self.value = value

    def __call__(self, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        _, s = broadcast_ts(t, S)
        return np.full(s.shape, self.value)

    def derivative_s(self, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        _, s = broadcast_ts(t, S)
        return np.zeros(s.shape)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "value": self.value}

    @property
    def is_constant(self) -> bool:
        return True


class AffineInS(CoefficientFunction):
    """
    Coefficient ``intercept + slope * S``, independent of time.

    Args:
        intercept: Value at S = 0.
        slope: Change per unit of S.
    """

    kind = "affine"

    def __init__(self, intercept: float, slope: float) -> None:
        self.intercept = float(intercept)
        self.slope = float(slope)
        if not (math.isfinite(self.intercept) and math.isfinite(self.slope)):
            raise ValueError(
                f"Affine coefficient needs finite parameters, got "
                f"intercept={self.intercept}, slope={self.slope}"
            )

    def __call__(self, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        _, s = broadcast_ts(t, S)
        return self.intercept + self.slope * s

    def derivative_s(self, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        _, s = broadcast_ts(t, S)
        return np.full(s.shape, self.slope)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "intercept": self.intercept, "slope": self.slope}

    @property
    def is_constant(self) -> bool:
        return self.slope == 0.0


class TableInterpolated(CoefficientFunction):
    """
    Piecewise-linear coefficient in S, clamped outside the table.

    Args:
        s: Strictly increasing price knots (at least two).
        values: Coefficient value at each knot.

    Raises:
        ValueError: If the knots are not strictly increasing, the arrays
            differ in length, or any entry is not finite.
    """

    kind = "table"

    def __init__(self, s: Sequence[float], values: Sequence[float]) -> None:
        s_arr = np.asarray(s, dtype=np.float64)
        v_arr = np.asarray(values, dtype=np.float64)

        if s_arr.ndim != 1 or s_arr.shape != v_arr.shape:
            raise ValueError(
                f"Table knots and values must be 1-D of equal length, "
                f"got {s_arr.shape} and {v_arr.shape}"
            )
        if s_arr.size < 2:
            raise ValueError("Table coefficient needs at least two knots")
        if not (np.all(np.isfinite(s_arr)) and np.all(np.isfinite(v_arr))):
            raise ValueError("Table coefficient entries must be finite")
        if np.any(np.diff(s_arr) <= 0):
            raise ValueError("Table knots must be strictly increasing")

        s_arr.setflags(write=False)
        v_arr.setflags(write=False)
        self.s = s_arr
        self.values = v_arr
        self._slopes = np.diff(v_arr) / np.diff(s_arr)

    def __call__(self, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        _, s = broadcast_ts(t, S)
        return np.interp(s, self.s, self.values)

    def derivative_s(self, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        # Right derivative inside the table, zero in the clamped regions
        _, s = broadcast_ts(t, S)
        idx = np.searchsorted(self.s, s, side="right") - 1
        inside = (idx >= 0) & (idx < self._slopes.size)
        out = np.zeros(s.shape)
        out[inside] = self._slopes[idx[inside]]
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "s": [float(x) for x in self.s],
            "values": [float(x) for x in self.values],
        }

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))
