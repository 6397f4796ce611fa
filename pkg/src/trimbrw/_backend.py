"""Pick the compiled kernels when available; ``TRIMBRW_BACKEND=python`` forces the fallback."""
from __future__ import annotations

import os
import warnings

from . import _kernels_py

_requested = os.environ.get("TRIMBRW_BACKEND", "auto").lower()

if _requested == "python":
    kernels = _kernels_py
    NAME = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        NAME = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        warnings.warn("compiled kernels unavailable; using the pure-Python engine", RuntimeWarning)
        kernels = _kernels_py
        NAME = "python"


def get(name: str | None = None):
    """Kernel module by name (``"cython"``/``"python"``) or the active default."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
