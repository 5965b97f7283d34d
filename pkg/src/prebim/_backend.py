"""Kernel backend selection.

The hot moment-matrix kernels exist twice: a numba ``@njit`` version and a
vectorised numpy version. ``PREBIM_BACKEND=numpy`` (or ``0``/``off``) forces
the numpy path; otherwise numba is used when it can be imported.
"""
import os

ENV_FLAG = "PREBIM_BACKEND"

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _requested():
    value = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if value in ("numpy", "python", "0", "off", "false", "no"):
        return "numpy"
    return "numba"


BACKEND = "numba" if (HAVE_NUMBA and _requested() == "numba") else "numpy"
