"""Kernel selection: compiled scan when available, pure Python otherwise.

Set ``PENSEMBLE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _scan_py

BACKEND = "python"
metropolis_scan = _scan_py.metropolis_scan

if os.environ.get("PENSEMBLE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _scan
    except ImportError:
        pass
    else:
        metropolis_scan = _scan.metropolis_scan
        BACKEND = "cython"
