"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``CRASHBENCH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from crashbench import _kernels_py

BACKEND = "python"

if os.environ.get("CRASHBENCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from crashbench import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

resize_bilinear = _impl.resize_bilinear
ranked_ap = _impl.ranked_ap
ranked_auc = _impl.ranked_auc

__all__ = ["BACKEND", "resize_bilinear", "ranked_ap", "ranked_auc"]
