"""Kernel selection: compiled extension when available, pure Python otherwise.

Set ``LABELFLOW_PURE=1`` to force the pure-Python kernel (used by the
benchmark comparing both and by parity tests).
"""

from __future__ import annotations

import os

if os.environ.get("LABELFLOW_PURE"):
    from . import _kernel_py as _impl
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernel_py as _impl

IMPLEMENTATION = _impl.IMPLEMENTATION

walk = _impl.walk
bind = _impl.bind
undo_to = _impl.undo_to
unify_inplace = _impl.unify_inplace
unify = _impl.unify
resolve = _impl.resolve
is_ground = _impl.is_ground
rename = _impl.rename
