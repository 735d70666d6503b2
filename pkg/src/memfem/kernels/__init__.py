"""Batch element-kernel backends.

Two interchangeable implementations of the hot assembly loops:

* ``_fastcore`` — Cython, compiled at install time;
* ``batch_py`` — pure numpy, always available.

The compiled core is preferred when it imports; set ``MEMFEM_BACKEND=python``
to force the fallback (useful for benchmarking and debugging). Both backends
produce identical numbers to roundoff and share one calling convention, see
:mod:`memfem.kernels.batch_py` for the reference semantics.
"""

import logging
import os

from memfem.kernels import batch_py

logger = logging.getLogger(__name__)

BACKEND = "python"
_impl = batch_py

if os.environ.get("MEMFEM_BACKEND", "").lower() not in ("python", "py"):
    try:
        from memfem.kernels import _fastcore  # noqa: F401

        BACKEND = "cython"
        _impl = _fastcore
    except ImportError:
        logger.info("compiled kernels unavailable; using the numpy backend")


def backend_name() -> str:
    return BACKEND


def get_backend(name: str | None = None):
    """Return a backend module by name (None = the active default)."""
    if name is None:
        return _impl
    if name in ("python", "py"):
        return batch_py
    if name == "cython":
        from memfem.kernels import _fastcore
        return _fastcore
    raise ValueError(f"unknown backend {name!r}")
