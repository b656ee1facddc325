"""Backend dispatch for the hot model kernels.

The active backend is chosen once at import time from the ``FEDSSL_BACKEND``
environment variable:

* ``numba`` -- require the jitted kernels (ImportError if numba is missing),
* ``numpy`` -- force the pure-numpy fallback,
* unset / ``auto`` -- numba when importable, numpy otherwise.

Both backends expose the same functions (``forward_probs``,
``grad_cross_entropy``, ``grad_consistency``) with identical contracts;
``benchmarks/bench_backends.py`` compares their throughput.
"""

from __future__ import annotations

import os
from types import ModuleType

_ENV_VAR = "FEDSSL_BACKEND"


def get_backend(name: str) -> ModuleType:
    """Import a kernel backend by name ('numpy' or 'numba')."""
    if name == "numpy":
        from . import numpy_backend

        return numpy_backend
    if name == "numba":
        from . import numba_backend

        return numba_backend
    raise ValueError(f"unknown kernel backend {name!r} (expected 'numpy' or 'numba')")


def _resolve() -> ModuleType:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice in ("numpy", "numba"):
        return get_backend(choice)
    if choice not in ("", "auto"):
        raise ValueError(f"{_ENV_VAR}={choice!r} is not one of 'auto', 'numpy', 'numba'")
    try:
        return get_backend("numba")
    except ImportError:
        return get_backend("numpy")


_active = _resolve()

BACKEND_NAME: str = _active.NAME
PROB_FLOOR: float = _active.PROB_FLOOR

forward_probs = _active.forward_probs
grad_cross_entropy = _active.grad_cross_entropy
grad_consistency = _active.grad_consistency
