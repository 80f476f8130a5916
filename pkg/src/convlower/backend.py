"""Kernel backend selection: compiled extension if available, numpy otherwise.

The two backends are bit-compatible (same per-element accumulation order,
no FP contraction), so selection affects speed only. Set
``CONVLOWER_BACKEND=compiled`` or ``=fallback`` to force one; forcing the
compiled backend when the extension is missing raises at import.
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _kernels
except ImportError:
    _kernels = None

COMPILED_AVAILABLE = _kernels is not None

_BACKENDS = {"fallback": _pykernels}
if COMPILED_AVAILABLE:
    _BACKENDS["compiled"] = _kernels


def get_backend(name: str | None = None):
    """Resolve a backend module by name; None means the active default."""
    if name is None:
        return ACTIVE
    try:
        return _BACKENDS[name]
    except KeyError:
        if name == "compiled":
            raise RuntimeError(
                "compiled backend requested but the extension is not built; "
                "run `pip install -e .` or `python setup.py build_ext --inplace`"
            ) from None
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}") from None


_env = os.environ.get("CONVLOWER_BACKEND")
if _env:
    if _env not in ("compiled", "fallback"):
        raise RuntimeError(f"CONVLOWER_BACKEND must be 'compiled' or 'fallback', got {_env!r}")
    if _env == "compiled" and not COMPILED_AVAILABLE:
        raise RuntimeError("CONVLOWER_BACKEND=compiled but the extension is not built")
    ACTIVE = _BACKENDS[_env]
else:
    ACTIVE = _kernels if COMPILED_AVAILABLE else _pykernels

ACTIVE_NAME: str = ACTIVE.NAME
