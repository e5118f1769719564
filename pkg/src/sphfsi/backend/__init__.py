"""Backend selection for the hot pair-interaction loops.

Two interchangeable implementations exist: a Cython extension
(``sphfsi._core``) and a pure-NumPy fallback (:mod:`sphfsi.backend.fallback`).
The compiled one is picked automatically when importable; set the environment
variable ``SPHFSI_BACKEND=numpy`` or ``compiled`` to force a choice.
``benchmarks/backend_bench.py`` compares the two.
"""

import os

from . import fallback

_requested = os.environ.get("SPHFSI_BACKEND", "auto").lower()

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from sphfsi import _core as _compiled
    except ImportError:
        if _requested == "compiled":
            raise

if _requested == "numpy" or _compiled is None:
    _impl = fallback
    BACKEND_NAME = "numpy"
else:
    _impl = _compiled
    BACKEND_NAME = "compiled"


def get_backend(name=None):
    """Return the backend module for ``name`` (default: the active one)."""
    if name in (None, "active"):
        return _impl
    if name == "numpy":
        return fallback
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled backend (sphfsi._core) is not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["numpy"]
    if _compiled is not None:
        names.append("compiled")
    return names


find_pairs = _impl.find_pairs
kernel_sums = _impl.kernel_sums
momentum = _impl.momentum
