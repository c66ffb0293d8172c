"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it was built and ``THINODAL_PURE_PYTHON``
is unset or ``0``.  ``BACKEND`` names the active implementation.
"""
import os

from . import _dopri_py

python_integrate = _dopri_py.integrate

try:
    from ._dopri import integrate as compiled_integrate
except ImportError:  # extension not built
    compiled_integrate = None

if compiled_integrate is not None and os.environ.get("THINODAL_PURE_PYTHON", "0") in ("", "0"):
    integrate = compiled_integrate
    BACKEND = "cython"
else:
    integrate = python_integrate
    BACKEND = "python"

STATUS_END = _dopri_py.STATUS_END
STATUS_ZERO = _dopri_py.STATUS_ZERO
STATUS_NONFINITE = _dopri_py.STATUS_NONFINITE
STATUS_STEP = _dopri_py.STATUS_STEP
STATUS_MAXSTEPS = _dopri_py.STATUS_MAXSTEPS

__all__ = ["integrate", "python_integrate", "compiled_integrate", "BACKEND"]
