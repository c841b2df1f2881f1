"""Hot-kernel backend selection.

The compiled Cython extension is preferred when built; the numpy reference
is the fallback. ``T4V_KERNELS`` overrides: ``auto`` (default), ``cython``
(require the extension), or ``python`` (force the reference).

All kernels take C-contiguous float64 arrays.
"""

import os

from . import _ref

_requested = os.environ.get("T4V_KERNELS", "auto").lower()
if _requested not in {"auto", "cython", "python"}:
    raise ValueError(f"T4V_KERNELS must be auto|cython|python, got {_requested!r}")

BACKEND = "python"
_impl = _ref
if _requested in {"auto", "cython"}:
    try:
        from . import _ck as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise

t1d_forward = _impl.t1d_forward
t1d_backward = _impl.t1d_backward
adamw_update = _impl.adamw_update

reference = _ref
