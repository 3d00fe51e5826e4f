"""Dispatched per-batch kernels.

Importing this module binds the kernel set chosen by ``_backend`` (numba by
default, pure numpy via ``CONFCAL_BACKEND=numpy``). ``implementation(name)``
gives direct access to either set for cross-checking and benchmarks.
"""

from . import _backend

if _backend.HAS_NUMBA:
    from ._kernels_numba import *  # noqa: F401,F403
else:
    from ._kernels_numpy import *  # noqa: F401,F403

BACKEND = _backend.BACKEND


def implementation(name: str):
    """Return the kernel module for an explicit backend ('numpy' or 'numba')."""
    if name == "numpy":
        from . import _kernels_numpy

        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ValueError(f"unknown kernel backend {name!r}")
