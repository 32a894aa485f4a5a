"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise, or when
``SHIELDSYNTH_PURE_PYTHON=1`` is set, the pure-Python mirror is used.  Both
expose the same functions and constants and agree bitwise.
"""

import os

from . import _kernels_py

if os.environ.get("SHIELDSYNTH_PURE_PYTHON", "") not in ("", "0"):
    backend = _kernels_py
else:
    try:
        from . import _kernels as backend
    except ImportError:  # extension not built
        backend = _kernels_py

BACKEND = backend.BACKEND
