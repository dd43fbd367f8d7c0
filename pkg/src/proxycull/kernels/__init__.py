"""Hot-kernel dispatch.

Two interchangeable implementations live here: ``numba_impl`` (jitted,
tile-parallel) and ``numpy_impl`` (vectorized fallback). They evaluate the
same floating-point expression trees and their outputs are bit-identical;
:mod:`proxycull.backend` picks which one binds to the public names.

Verdict codes written by the anchor filter:
    0 kept, 1 culled_near, 2 culled_offscreen, 3 culled_occluded
"""

from __future__ import annotations

from ..backend import BACKEND

VERDICT_KEPT = 0
VERDICT_NEAR = 1
VERDICT_OFFSCREEN = 2
VERDICT_OCCLUDED = 3

if BACKEND == "numba":
    from . import numba_impl as _impl
else:
    from . import numpy_impl as _impl

fill_depth = _impl.fill_depth
cull_anchors_kernel = _impl.cull_anchors_kernel
hiz_reduce = _impl.hiz_reduce


def load_impl(name: str):
    """Load a specific implementation module ('numba' or 'numpy').

    Used by the benchmark to time both backends in one process.
    """
    if name == "numba":
        from . import numba_impl
        return numba_impl
    if name == "numpy":
        from . import numpy_impl
        return numpy_impl
    raise ValueError(f"unknown backend {name!r}")
