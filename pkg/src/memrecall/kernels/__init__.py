"""Hot inner loops with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``MEMRECALL_PURE_PYTHON=1``
to force the fallback.  ``BACKEND`` names the active one.
"""
import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("MEMRECALL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

knn_select = _active.knn_select
vtrace_scan = _active.vtrace_scan
ewma = _active.ewma
rolling_mean = _active.rolling_mean
distance_field = _active.distance_field

__all__ = [
    "BACKEND",
    "compiled_backend",
    "python_backend",
    "knn_select",
    "vtrace_scan",
    "ewma",
    "rolling_mean",
    "distance_field",
]
