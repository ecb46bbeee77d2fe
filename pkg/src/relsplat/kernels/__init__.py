"""Compositing kernel backend selection.

The compiled Cython module is preferred; the NumPy reference implementation
is the fallback.  Set RELSPLAT_BACKEND=ref to force the reference kernels
(e.g. for the backend-equivalence tests and the benchmark).
"""

import os

from . import _ref

if os.environ.get("RELSPLAT_BACKEND", "").lower() in ("ref", "python"):
    _impl = _ref
    BACKEND = "ref"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _ref
        BACKEND = "ref"

composite_forward = _impl.composite_forward
composite_backward = _impl.composite_backward
composite_scalar = _impl.composite_scalar
accumulate_support = _impl.accumulate_support


def reference():
    """The pure-NumPy kernel module (always available)."""
    return _ref


def compiled():
    """The compiled kernel module, or None if it failed to import."""
    try:
        from . import _core
        return _core
    except ImportError:
        return None
