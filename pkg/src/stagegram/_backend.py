"""Kernel backend selection.

The compiled extension is preferred; the pure-Python twin is used when the
extension is missing or when STAGEGRAM_BACKEND=python is set (useful for
debugging and for the backend benchmark).
"""

from __future__ import annotations

import os

_FORCED = os.environ.get("STAGEGRAM_BACKEND", "").strip().lower()

if _FORCED in {"py", "python", "pure"}:
    from . import _pykernels as kernels
elif _FORCED in {"c", "cython", "compiled"}:
    from . import _ckernels as kernels  # type: ignore[no-redef]
else:
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _pykernels as kernels  # type: ignore[no-redef]


def backend_name() -> str:
    return kernels.BACKEND_NAME
