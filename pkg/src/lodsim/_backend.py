"""Backend selection: compiled kernels when available, pure Python otherwise.

Set ``LODSIM_PURE_PYTHON=1`` in the environment to force the fallback. Both
backends consume random draws in the same order and produce bit-identical
results; only speed differs.
"""
from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("LODSIM_PURE_PYTHON", "").strip() not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _pykernels

BACKEND: str = kernels.BACKEND


def backend_name() -> str:
    """'compiled' or 'python', whichever is active."""
    return BACKEND
