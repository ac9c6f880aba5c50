"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``ANOSOV_LAB_PURE_PYTHON=1`` to force the numpy path.
"""

from __future__ import annotations

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("ANOSOV_LAB_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if _active is compiled_backend else "python"

trig_eval = _active.trig_eval
invert_newton = _active.invert_newton
bilinear_periodic = _active.bilinear_periodic

__all__ = [
    "BACKEND",
    "bilinear_periodic",
    "compiled_backend",
    "invert_newton",
    "python_backend",
    "trig_eval",
]
