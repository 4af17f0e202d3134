"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the NumPy
fallback is imported.  Set ``SLIPGAIT_PURE_PYTHON=1`` to force the fallback.
"""
import logging
import os

logger = logging.getLogger(__name__)

_force_py = os.environ.get("SLIPGAIT_PURE_PYTHON", "").strip() not in ("", "0")

if _force_py:
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        from . import _kernels_py as kernels

        BACKEND = "python"
        logger.debug("compiled kernels unavailable; using NumPy fallback")

eval_points = kernels.eval_points
eval_model = kernels.eval_model
bernstein = kernels.bernstein
bernstein_values = kernels.bernstein_values

__all__ = ["BACKEND", "eval_points", "eval_model", "bernstein", "bernstein_values"]
