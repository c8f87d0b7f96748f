"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``PRECISION_HIGHWAY_BACKEND=python`` to force the fallback.
"""

import os

from . import _fallback

BACKEND_ENV = "PRECISION_HIGHWAY_BACKEND"

_compiled = None
if os.environ.get(BACKEND_ENV, "").lower() not in ("python", "numpy", "fallback"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

kernels = _compiled if _compiled is not None else _fallback
name = "cython" if _compiled is not None else "python"


def compiled_available():
    """Whether the compiled extension can be imported at all."""
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
