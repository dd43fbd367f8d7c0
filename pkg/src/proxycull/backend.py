"""Kernel backend selection.

The hot inner loops (triangle fill, anchor filtering, depth pyramid
reduction) exist twice: a numba-jitted implementation and a pure-NumPy
fallback. Both produce bit-identical arrays; the env flag picks one:

    PROXYCULL_BACKEND=numba   force the jitted kernels (error if missing)
    PROXYCULL_BACKEND=numpy   force the NumPy fallback
    unset / auto              numba when importable, NumPy otherwise
"""

from __future__ import annotations

import os

ENV_VAR = "PROXYCULL_BACKEND"


def _detect() -> str:
    choice = os.environ.get(ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{ENV_VAR} must be one of 'auto', 'numba', 'numpy'; got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise RuntimeError(f"{ENV_VAR}=numba but numba is not importable")
        return "numpy"
    return "numba"


BACKEND = _detect()


def backend_name() -> str:
    """Active kernel backend, 'numba' or 'numpy'."""
    return BACKEND
