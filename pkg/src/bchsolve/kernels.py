"""Kernel backend selection.

The compiled extension is used when it was built; set ``BCHSOLVE_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("BCHSOLVE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

shifted_product = _impl.shifted_product
norm2 = _impl.norm2
weighted_mean = _impl.weighted_mean
