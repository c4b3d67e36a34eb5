"""
CSV artifacts.

Every file starts with one ``#`` comment line carrying the configuration
fingerprint and the seed, numbers use 12 significant digits with '.' as
decimal separator, lines end with '\\n', and files are written to a
temporary sibling and renamed into place.
"""

from __future__ import annotations

import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .hedge import ReplicationReport
from .pide import PriceSurface
from .simulate import PathBundle

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def header_line(fingerprint: str, seed: int | None) -> str:
    """The leading comment line of every artifact."""
    return f"# config_sha256={fingerprint} seed={'none' if seed is None else seed}\n"


def atomic_write_text(path: str | Path, text: str) -> Path:
    """
    Write text via a temporary file in the target directory and rename it.

    Returns:
        The final path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.debug(f"Wrote {path}")
    return path


def write_frame(path: str | Path, frame: pd.DataFrame, header: str) -> Path:
    """Write a DataFrame with the artifact header and fixed formatting."""
    buf = io.StringIO()
    buf.write(header)
    frame.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, buf.getvalue())


def surface_frame(surface: PriceSurface, values: str = "f") -> pd.DataFrame:
    """
    One row per time node, one column per price node.

    Args:
        surface: Solved surface.
        values: "f", "theta" or "zeta".
    """
    if values not in ("f", "theta", "zeta"):
        raise ValueError(f"values must be 'f', 'theta' or 'zeta', got {values!r}")
    columns = [FLOAT_FORMAT % s for s in surface.S]
    frame = pd.DataFrame(getattr(surface, values), columns=columns)
    frame.insert(0, "t", surface.t)
    return frame


def bundle_frame(bundle: PathBundle) -> pd.DataFrame:
    """Long format: one row per path per time node."""
    n_paths, n_nodes = bundle.S.shape
    V = bundle.V if bundle.V is not None else np.full(bundle.S.shape, np.nan)
    return pd.DataFrame(
        {
            "path": np.repeat(np.arange(n_paths), n_nodes),
            "t": np.tile(bundle.t, n_paths),
            "S": bundle.S.ravel(),
            "theta": bundle.theta.ravel(),
            "V": V.ravel(),
            "A": bundle.A.ravel(),
            "N": bundle.N.ravel(),
        }
    )


def reports_frame(reports: Sequence[ReplicationReport]) -> pd.DataFrame:
    columns = ["strategy", "estimate", "stderr", "n_paths", "n_steps", "seed"]
    return pd.DataFrame([r.as_row() for r in reports], columns=columns)


def write_surface(
    path: str | Path, surface: PriceSurface, header: str, values: str = "f"
) -> Path:
    return write_frame(path, surface_frame(surface, values), header)


def write_bundle(path: str | Path, bundle: PathBundle, header: str) -> Path:
    return write_frame(path, bundle_frame(bundle), header)


def write_reports(path: str | Path, reports: Sequence[ReplicationReport], header: str) -> Path:
    return write_frame(path, reports_frame(reports), header)


def read_artifact(path: str | Path) -> pd.DataFrame:
    """Read an artifact back, skipping the header comment."""
    return pd.read_csv(path, comment="#")


__all__ = [
    "FLOAT_FORMAT",
    "header_line",
    "atomic_write_text",
    "write_frame",
    "surface_frame",
    "bundle_frame",
    "reports_frame",
    "write_surface",
    "write_bundle",
    "write_reports",
    "read_artifact",
]
