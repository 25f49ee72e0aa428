"""Backend selection for the hot loops.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback is used. Set ``TCFA_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("TCFA_PURE_PYTHON"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

UNREACHABLE = _fallback.UNREACHABLE
geodesic_distance = _impl.geodesic_distance
best_split = _impl.best_split

__all__ = ["BACKEND", "UNREACHABLE", "geodesic_distance", "best_split"]
