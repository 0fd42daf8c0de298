"""Import-time selection between the compiled kernels and the Python fallback."""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("REACHPF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

sector_closest = _impl.sector_closest
mlp_forward = _impl.mlp_forward

__all__ = ["BACKEND", "sector_closest", "mlp_forward"]
