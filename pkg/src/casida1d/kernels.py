"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
versions in ``_fallback`` are used. Set ``CASIDA1D_PURE_PYTHON=1`` to force
the fallback.
"""

import os

from . import _fallback

BACKEND = "python"

if os.environ.get("CASIDA1D_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
else:
    _compiled = None

if _compiled is not None:
    cn_step = _compiled.cn_step
    soft_coulomb_sum = _compiled.soft_coulomb_sum
    gaussian_smooth = _compiled.gaussian_smooth
    BACKEND = "cython"
else:
    cn_step = _fallback.cn_step
    soft_coulomb_sum = _fallback.soft_coulomb_sum
    gaussian_smooth = _fallback.gaussian_smooth

__all__ = ["BACKEND", "cn_step", "soft_coulomb_sum", "gaussian_smooth"]
