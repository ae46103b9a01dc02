"""Select the kernel backend at import time.

The compiled ``_ckernels`` extension is used when it can be imported;
otherwise the NumPy twins in ``_pykernels`` are used.  Setting the
environment variable ``FPCAP_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

_forced = os.environ.get("FPCAP_BACKEND", "").strip().lower()

kernels = _pykernels
name = "python"
if _forced != "python":
    try:
        from . import _ckernels  # type: ignore[attr-defined]
    except ImportError:
        if _forced == "cython":
            raise
    else:
        kernels = _ckernels
        name = "cython"


def get(backend: str | None = None):
    """Return the kernel module for ``backend`` ("cython", "python" or None)."""
    if backend is None:
        return kernels
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels  # type: ignore[attr-defined]

        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")


def available() -> list[str]:
    """Backends importable in this environment."""
    out = ["python"]
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return out
    return ["cython"] + out
