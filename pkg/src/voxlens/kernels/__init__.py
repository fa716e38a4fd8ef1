"""Marching kernel backends: compiled extension with pure-Python fallback.

The compiled Cython kernel is preferred; set VOXLENS_PURE_PY=1 to force the
NumPy fallback (used for debugging and for environments without a C
toolchain). Both backends implement the same marching semantics; the
benchmarks/kernel_bench.py script compares their throughput.
"""

from __future__ import annotations

import os

from . import _march_py

_FORCED_PY = os.environ.get("VOXLENS_PURE_PY", "") not in ("", "0")

if _FORCED_PY:
    _impl = _march_py
    BACKEND = "python"
else:
    try:
        from . import _march as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _march_py
        BACKEND = "python"


def backend_name() -> str:
    return BACKEND


def march_frame(*args, **kwargs):
    """Render one frame; see _march_py.march_frame for the argument contract."""
    return _impl.march_frame(*args, **kwargs)
