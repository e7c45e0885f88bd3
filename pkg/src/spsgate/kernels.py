"""Kernel dispatch.

The Cython extension ``spsgate._ckernels`` is used when it has been built;
otherwise the numpy versions in ``spsgate._pykernels`` are used.  Setting
``SPSGATE_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("SPSGATE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels
    else:
        BACKEND = "cython"
else:
    _impl = _pykernels

correlate_counts = _impl.correlate_counts
deadtime_mask = _impl.deadtime_mask

__all__ = ["BACKEND", "correlate_counts", "deadtime_mask"]
