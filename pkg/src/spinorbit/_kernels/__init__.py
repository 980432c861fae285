"""Kernel backend selection.

The hot state-vector updates come in two interchangeable flavors: numba
@njit loops and pure-numpy reference code. The backend is chosen once at
import time from the ``SPINORBIT_KERNELS`` environment variable:

    SPINORBIT_KERNELS=numba   force numba (ImportError if unavailable)
    SPINORBIT_KERNELS=numpy   force the pure-numpy fallback
    unset / auto              numba when importable, else numpy

``benchmarks/bench_kernels.py`` compares the two backends.
"""

import os

from . import _numpy

_BACKEND_ENV = os.environ.get("SPINORBIT_KERNELS", "auto").strip().lower()

if _BACKEND_ENV not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"SPINORBIT_KERNELS={_BACKEND_ENV!r} not understood "
        "(expected 'numba', 'numpy' or 'auto')"
    )

if _BACKEND_ENV == "numpy":
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _BACKEND_ENV == "numba":
            raise
        _impl = _numpy
        BACKEND = "numpy"

apply_axis_rotation = _impl.apply_axis_rotation
apply_z_phase = _impl.apply_z_phase
expect_xyz = _impl.expect_xyz


def backend():
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND
