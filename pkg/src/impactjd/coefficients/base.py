"""Base class for coefficient functions of (t, S)."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray


class CoefficientFunction(ABC):
    """
    Abstract base class for model coefficients.

    A coefficient is a deterministic function of time and price. The market
    coefficients (mu, sigma, r, lambda) and the strategy rates (eta, zeta)
    are all instances, as are the integrands of the Ito residual study,
    where the second argument is the state X rather than a price.

    Evaluation is vectorized: ``t`` and ``S`` broadcast against each other
    and the result is a float64 array of the broadcast shape (0-d for scalar
    inputs). Implementations must be pure so that identical inputs give
    bit-identical outputs.

    Example:
        ```python
        class Quadratic(CoefficientFunction):
            kind = "quadratic"

            def __call__(self, t, S):
                t, S = np.broadcast_arrays(np.asarray(t, float), np.asarray(S, float))
                return 0.01 * S**2

            def derivative_s(self, t, S):
                t, S = np.broadcast_arrays(np.asarray(t, float), np.asarray(S, float))
                return 0.02 * S

            def to_dict(self):
                return {"kind": self.kind}
        ```
    """

    kind: str = "abstract"

    @abstractmethod
    def __call__(self, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        """
        Evaluate the coefficient.

        Args:
            t: Time(s), broadcastable against ``S``.
            S: Price(s) or state value(s).

        Returns:
            Coefficient values with the broadcast shape of ``t`` and ``S``.
        """
        pass

    @abstractmethod
    def derivative_s(self, t: ArrayLike, S: ArrayLike) -> NDArray[np.float64]:
        """Partial derivative with respect to the second argument."""
        pass

    @abstractmethod
    def to_dict(self) -> dict[str, Any]:
        """
        Serializable description of the coefficient.

        The result round-trips through ``make_coefficient`` and is used to
        fingerprint run configurations and price surfaces.
        """
        pass

    @property
    def is_constant(self) -> bool:
        """True when the coefficient does not depend on (t, S)."""
        return False

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({params})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoefficientFunction):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(repr(self))


def broadcast_ts(t: ArrayLike, S: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Broadcast time and price arguments to a common float64 shape."""
    t_arr, s_arr = np.broadcast_arrays(
        np.asarray(t, dtype=np.float64), np.asarray(S, dtype=np.float64)
    )
    return t_arr, s_arr
