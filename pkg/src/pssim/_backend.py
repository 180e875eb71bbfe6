"""Select the compiled kernels when importable, else the Python ones."""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

COMPILED_AVAILABLE = _compiled is not None


def kernels(name: str = "auto"):
    """Return the kernel module for ``name`` in {"auto", "cython", "python"}."""
    if name == "python" or os.environ.get("PSSIM_FORCE_PYTHON") == "1" and name == "auto":
        return _pykernels
    if name in ("auto", "cython"):
        if _compiled is not None:
            return _compiled
        if name == "cython":
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return _pykernels
    raise ValueError(f"unknown kernel backend {name!r}")


def default_name() -> str:
    return "cython" if kernels("auto") is _compiled and _compiled is not None else "python"
