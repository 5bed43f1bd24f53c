"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it is importable and
``ADAPTKIT_PURE_PYTHON`` is unset; otherwise the numpy fallback is used.
``BACKEND`` records which one was picked.
"""

import os

from adaptkit import _kernels_py

if os.environ.get("ADAPTKIT_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from adaptkit import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

project_box_slab = _impl.project_box_slab
kmm_pgd = _impl.kmm_pgd
stump_search = _impl.stump_search
weighted_median = _impl.weighted_median
