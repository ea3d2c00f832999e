"""Hot loops, with a numba implementation and a pure-numpy fallback.

The backend is picked once at import time. Set ``CKLAB_BACKEND=numpy`` (or
``CKLAB_DISABLE_NUMBA=1``) to force the numpy path; if numba cannot be
imported the numpy path is used as well. Both modules expose the same
functions with the same signatures, so tests can import them side by side.
"""
import importlib
import os

from . import numpy_impl


def _want_numba():
    if os.environ.get("CKLAB_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return False
    return os.environ.get("CKLAB_BACKEND", "numba").strip().lower() != "numpy"


numba_impl = None
if _want_numba():
    try:
        numba_impl = importlib.import_module(__name__ + ".numba_impl")
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_impl = None

impl = numba_impl if numba_impl is not None else numpy_impl
BACKEND = "numba" if impl is numba_impl else "numpy"

row_integrals = impl.row_integrals
kraichnan_row = impl.kraichnan_row
fdt_march = impl.fdt_march
hform_solve = impl.hform_solve
violation_row = impl.violation_row
grad_p3 = impl.grad_p3
grad_sparse = impl.grad_sparse
polyval = impl.polyval

__all__ = [
    "BACKEND",
    "impl",
    "numpy_impl",
    "numba_impl",
    "row_integrals",
    "kraichnan_row",
    "fdt_march",
    "hform_solve",
    "violation_row",
    "grad_p3",
    "grad_sparse",
    "polyval",
]
