"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module is loaded. Set ``STREAMLAG_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py as python_backend

if os.environ.get("STREAMLAG_PURE_PYTHON", "") not in ("", "0"):
    _impl = python_backend
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = python_backend
        BACKEND = "python"

matmul = _impl.matmul
matmul_nt = _impl.matmul_nt
masked_softmax = _impl.masked_softmax
all_finite = _impl.all_finite
dal_sum = _impl.dal_sum

__all__ = ["BACKEND", "matmul", "matmul_nt", "masked_softmax", "all_finite", "dal_sum", "python_backend"]
