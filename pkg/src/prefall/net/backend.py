"""Kernel selection: the compiled extension when importable, NumPy otherwise.

Set ``PREFALL_PURE_PYTHON=1`` to force the NumPy path.
"""

import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)


def _select():
    if os.environ.get("PREFALL_PURE_PYTHON", "").strip() not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        logger.debug("compiled kernel unavailable, using NumPy fallback")
        return _kernels_py, "python"
    return _kernels, "cython"


kernels, BACKEND = _select()
pure = _kernels_py
