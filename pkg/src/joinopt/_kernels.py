"""Kernel selection: use the compiled extension when present, otherwise the
pure-Python fallback with identical semantics.

`KERNEL_BACKEND` reports which implementation is active ("compiled" or
"pure"); set JOINOPT_PURE_KERNELS=1 to force the fallback (used by the
kernel benchmark and differential tests).
"""

from __future__ import annotations

import os

if os.environ.get("JOINOPT_PURE_KERNELS") == "1":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

subset_dp = _impl.subset_dp
dpsize = _impl.dpsize
KERNEL_BACKEND = "compiled" if _impl.COMPILED else "pure"
