"""Kernel backend selection.

The compiled extension is preferred when present; the numpy backend is the
fallback.  Set POLYSHARE_KERNELS=numpy (or =cython) to force a choice, e.g.
for the backend comparison benchmark.
"""
import os

from . import npy

_choice = os.environ.get("POLYSHARE_KERNELS", "").strip().lower()

if _choice == "numpy":
    _impl = npy
elif _choice == "cython":
    from . import _ringcore as _impl  # raises if the extension is missing
else:
    try:
        from . import _ringcore as _impl
    except ImportError:
        _impl = npy

BACKEND = _impl.BACKEND_NAME
mul_mod = _impl.mul_mod
powers_mod = _impl.powers_mod
matmul_mod = _impl.matmul_mod
trunc_shift = _impl.trunc_shift


def get_backend(name: str):
    """Return a specific backend module by name ("numpy" or "cython")."""
    if name == "numpy":
        return npy
    if name == "cython":
        from . import _ringcore
        return _ringcore
    raise ValueError(f"unknown kernel backend: {name!r}")
