"""Kernel dispatch: the compiled extension when importable, else pure Python.

Set ``BURSTSIM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("BURSTSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

easy_pass = _impl.easy_pass
project_starts = _impl.project_starts

__all__ = ["BACKEND", "easy_pass", "project_starts"]
