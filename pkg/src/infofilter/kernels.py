"""Backend selection for the value-grid kernels.

The compiled extension is used when it was built; setting
``INFOFILTER_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

if _compiled is not None and os.environ.get("INFOFILTER_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "compiled"
else:
    BACKEND = "python"

_impl = BACKENDS[BACKEND]
interpolate = _impl.interpolate
continuation = _impl.continuation


def get_backend(name=None):
    """Kernel module by name (default: the active one)."""
    return BACKENDS[name or BACKEND]
