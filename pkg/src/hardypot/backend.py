"""Selection between the compiled core and its numpy twin.

The compiled extension is used when importable.  Setting the environment
variable ``HARDYPOT_PURE=1`` forces the numpy implementation.
"""
from __future__ import annotations

import os

from . import _core_py

if os.environ.get("HARDYPOT_PURE", "") not in ("", "0"):
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _core_py
        BACKEND = "python"

KIND_NALPHA = 0
KIND_GREEN = 1
KIND_GREEN_LOG = 2

kernel_block = _impl.kernel_block
kernel_row64 = _impl.kernel_row64
matvec = _impl.matvec


def implementation(name: str):
    """Return the module implementing backend ``name`` ('cython' or 'python')."""
    if name == "python":
        return _core_py
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
