"""Select the pairwise-kernel implementation at import time.

The compiled extension is preferred; set ``EULERLIMIT_PURE_PYTHON=1`` to
force the numpy fallback.
"""

import os

from . import _fallback

if os.environ.get("EULERLIMIT_PURE_PYTHON", "").strip() not in ("", "0"):
    impl = _fallback
    NAME = "python"
else:
    try:
        from . import _kernels as impl
        NAME = "compiled"
    except ImportError:
        impl = _fallback
        NAME = "python"

real_space_sums = impl.real_space_sums
fourier_sums = impl.fourier_sums


def available():
    """Mapping of backend name -> module for every importable backend."""
    out = {"python": _fallback}
    try:
        from . import _kernels
    except ImportError:
        return out
    out["compiled"] = _kernels
    return out
