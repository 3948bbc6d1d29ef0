"""Kernel backend selection.

The compiled extension is used when it imports; set ``PKLEVAL_PURE_PYTHON=1``
to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("PKLEVAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

obstacle_field = _impl.obstacle_field

__all__ = ["BACKEND", "obstacle_field"]
