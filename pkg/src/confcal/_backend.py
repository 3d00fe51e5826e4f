"""Kernel backend selection.

The hot per-batch kernels exist twice: a pure-numpy implementation and a
numba-jitted one. ``CONFCAL_BACKEND`` picks which set the package uses:

* unset / ``auto`` -- numba if importable, numpy otherwise
* ``numba``        -- require numba, raise if it cannot be imported
* ``numpy``        -- force the pure-numpy path

The choice is made once at import time; every computation in a process then
runs on a single backend, which keeps repeat runs bit-for-bit reproducible.
"""

import os

ENV_VAR = "CONFCAL_BACKEND"


def _numba_usable() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def select_backend() -> str:
    choice = os.environ.get(ENV_VAR, "auto").strip().lower() or "auto"
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _numba_usable():
            raise ImportError(
                f"{ENV_VAR}=numba but numba is not importable in this environment"
            )
        return "numba"
    if choice == "auto":
        return "numba" if _numba_usable() else "numpy"
    raise ValueError(f"unrecognized {ENV_VAR}={choice!r} (use auto, numba or numpy)")


BACKEND = select_backend()
HAS_NUMBA = BACKEND == "numba"
