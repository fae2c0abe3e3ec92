"""Selects the compiled kernels when available, else the numpy fallback.

``MINK3D_BACKEND=python`` forces the fallback. ``MINK3D_THREADS`` caps the
OpenMP worker count used by the compiled kernels.
"""
import logging
import os

from . import _fallback

logger = logging.getLogger(__name__)


def thread_count() -> int:
    value = os.environ.get("MINK3D_THREADS")
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def _load_compiled():
    if os.environ.get("MINK3D_BACKEND", "").lower() == "python":
        return None
    try:
        from . import _core
    except ImportError:
        logger.debug("compiled core unavailable, using numpy fallback")
        return None
    return _core


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"


def owned_cells(white, backend=None):
    if (backend or BACKEND) == "cython":
        if _compiled is None:
            raise RuntimeError("compiled backend not built")
        return _compiled.owned_cells(white, thread_count())
    return _fallback.owned_cells(white)


def window_sums(contrib, points, weights, backend=None):
    if (backend or BACKEND) == "cython":
        if _compiled is None:
            raise RuntimeError("compiled backend not built")
        return _compiled.window_sums(contrib, points, weights, thread_count())
    return _fallback.window_sums(contrib, points, weights)
