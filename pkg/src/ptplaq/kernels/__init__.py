"""Kernel backend selection.

The compiled extension ``ptplaq._cykern`` is preferred when it imported
cleanly; otherwise the pure NumPy implementations take over. Set
``PTPLAQ_BACKEND=python`` (or ``compiled``) to force a choice; forcing the
compiled backend when it is unavailable raises ImportError.
"""

import os

from ptplaq.kernels import pyref

_requested = os.environ.get("PTPLAQ_BACKEND", "").strip().lower()

if _requested in ("python", "pure", "py"):
    _impl = pyref
    BACKEND = "python"
elif _requested in ("", "compiled", "c", "cython"):
    try:
        from ptplaq import _cykern as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested:
            raise ImportError(
                "PTPLAQ_BACKEND=compiled requested but ptplaq._cykern is not built")
        _impl = pyref
        BACKEND = "python"
else:
    raise ValueError(f"unrecognized PTPLAQ_BACKEND value: {_requested!r}")

eigvals = _impl.eigvals
rk4_evolve = _impl.rk4_evolve

STATUS_OK = pyref.STATUS_OK
STATUS_OVERFLOW = pyref.STATUS_OVERFLOW
STATUS_NAN = pyref.STATUS_NAN


def backend_name() -> str:
    """Name of the kernel backend actually in use ('compiled' or 'python')."""
    return BACKEND
