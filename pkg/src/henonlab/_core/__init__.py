"""Kernel backend selection.

Prefers the compiled Cython extension; falls back to the pure-Python twin.
Set ``HENONLAB_FORCE_PY=1`` to force the fallback (used by the benchmark).
"""

import os

from . import escape_kernel_py

if os.environ.get("HENONLAB_FORCE_PY"):
    kernel = escape_kernel_py
else:
    try:
        from . import escape_kernel as kernel  # type: ignore[no-redef]
    except ImportError:
        kernel = escape_kernel_py

BACKEND = kernel.BACKEND

__all__ = ["kernel", "escape_kernel_py", "BACKEND"]
