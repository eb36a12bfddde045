"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time from the ``VTON_KERNELS``
environment variable: ``numba`` (default when numba imports cleanly) or
``numpy``. Both backends implement the same four functions and agree to
float64 round-off; ``tests/test_kernels.py`` asserts this.
"""

import os

_requested = os.environ.get("VTON_KERNELS", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(f"VTON_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    BACKEND = "numpy"
else:
    try:
        from . import _numba  # noqa: F401

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        BACKEND = "numpy"

if BACKEND == "numba":
    from ._numba import (
        conv2d_forward,
        conv2d_backward,
        grid_sample_forward,
        grid_sample_backward,
    )
else:
    from ._numpy import (
        conv2d_forward,
        conv2d_backward,
        grid_sample_forward,
        grid_sample_backward,
    )

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward",
    "grid_sample_forward",
    "grid_sample_backward",
]
