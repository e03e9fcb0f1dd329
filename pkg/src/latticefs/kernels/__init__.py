"""Backend selection for the partition-refinement kernels.

The compiled extension is preferred when present; `LATTICEFS_BACKEND` can
force either implementation (`cython` / `python`). Both expose the same two
functions with identical semantics.
"""

import os

from . import _py

_choice = os.environ.get("LATTICEFS_BACKEND", "auto").lower()

if _choice not in ("auto", "cython", "python"):
    raise ValueError(f"LATTICEFS_BACKEND must be auto|cython|python, got {_choice!r}")

_impl = None
if _choice in ("auto", "cython"):
    try:
        from . import _entropy_cy as _impl
    except ImportError:
        if _choice == "cython":
            raise ImportError("cython backend requested but the extension is not built")
        _impl = None
if _impl is None:
    _impl = _py

BACKEND = _impl.BACKEND
refine_partition = _impl.refine_partition
partition_entropy_with = _impl.partition_entropy_with


def get_backend(name: str):
    """Return a specific backend module (for benchmarking), or None."""
    if name == "python":
        return _py
    if name == "cython":
        try:
            from . import _entropy_cy
            return _entropy_cy
        except ImportError:
            return None
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return [name for name in ("cython", "python") if get_backend(name) is not None]
