"""Select the compiled kernels when available, else the numpy versions.

Set ``UCPREDICT_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("UCPREDICT_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

soc_nt_scaling = _impl.soc_nt_scaling
soc_apply_w = _impl.soc_apply_w
soc_jordan_prod = _impl.soc_jordan_prod
soc_jordan_div = _impl.soc_jordan_div
soc_max_step = _impl.soc_max_step
soc_inv_w_blocks = _impl.soc_inv_w_blocks
gaussian_kernel = _impl.gaussian_kernel
hamming_distances = _impl.hamming_distances

__all__ = [
    "BACKEND",
    "soc_nt_scaling",
    "soc_apply_w",
    "soc_jordan_prod",
    "soc_jordan_div",
    "soc_max_step",
    "soc_inv_w_blocks",
    "gaussian_kernel",
    "hamming_distances",
]
