"""
CLI entry point for impactjd.

Usage:
    impactjd price --config configs/bs_reduction.toml --out out/bs
    python -m impactjd validate --config configs/default.toml
"""

from __future__ import annotations

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
