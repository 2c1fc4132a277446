"""Select the compiled kernels when available, otherwise the NumPy fallback.

Set ``HDIVBIOT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

kernels = _kernels_py
COMPILED = False

if os.environ.get("HDIVBIOT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
        COMPILED = True
    except ImportError:
        pass
