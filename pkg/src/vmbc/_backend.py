"""Select the compiled event kernels when available.

Set ``VMBC_PURE_PYTHON=1`` to force the pure-Python fallback.
"""
import os

from . import _pycore

if os.environ.get("VMBC_PURE_PYTHON"):
    core = _pycore
    BACKEND = "python"
else:
    try:
        from . import _core as core
    except ImportError:
        core = _pycore
        BACKEND = "python"
    else:
        BACKEND = "compiled"
