"""Kernel lane selection: compiled extension when available, numpy otherwise.

The environment variable ``LAMPSCAN_KERNELS`` forces a lane: ``c`` (fail if
the extension is missing), ``py``, or ``auto`` (default). Both lanes expose
the same batch API and are cross-checked in the test suite.
"""

from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("LAMPSCAN_KERNELS", "auto").lower()

if _choice == "py":
    _impl = _kernels_py
elif _choice in ("auto", "c"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "c":
            raise
        _impl = _kernels_py
else:
    raise ValueError(f"LAMPSCAN_KERNELS={_choice!r}: expected c, py or auto")

BACKEND = _impl.BACKEND

orientation_recursion = _impl.orientation_recursion
build_integral_slice = _impl.build_integral_slice
rasterize_segments = _impl.rasterize_segments
eval_pixel_value = _impl.eval_pixel_value
eval_image_value = _impl.eval_image_value
eval_idt3_batch = _impl.eval_idt3_batch
eval_dt3_points = _impl.eval_dt3_points
eval_direct_batch = _impl.eval_direct_batch
rasterize_triangles = _impl.rasterize_triangles


def backend_name() -> str:
    """Which lane is active: "compiled" or "python"."""
    return BACKEND
