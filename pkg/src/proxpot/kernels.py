"""Kernel selection: the compiled core when importable, else the Python twin.

Set ``PROXPOT_PURE=1`` to force the pure-Python kernels.
"""
from __future__ import annotations

import os

from . import _pycore

BACKEND = "python"

if os.environ.get("PROXPOT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pycore
else:
    _impl = _pycore

KIND_POT = _pycore.KIND_POT
KIND_LAYERED = _pycore.KIND_LAYERED
KIND_NONE = _pycore.KIND_NONE
DIST_MATRIX = _pycore.DIST_MATRIX
DIST_LINE = _pycore.DIST_LINE
DIST_RING = _pycore.DIST_RING
DIST_UNKNOWN = _pycore.DIST_UNKNOWN

khop_layers = _impl.khop_layers
bfs_rows = _impl.bfs_rows
static_kernel = _impl.static_kernel
dynamic_kernel = _impl.dynamic_kernel
tv_evolution = _impl.tv_evolution


def implementations() -> dict:
    """Both kernel sets, for benchmarks and cross-checks."""
    impls = {"python": _pycore}
    try:
        from . import _core

        impls["cython"] = _core
    except ImportError:  # pragma: no cover
        pass
    return impls
