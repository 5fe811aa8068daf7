"""Backend switch for the hot kernels.

Every kernel in :mod:`energy_fs.kernels` exists twice: a numba ``@njit`` loop
and a vectorised pure-numpy version. The numba path is the default; set
``ENERGY_FS_USE_NUMBA=0`` in the environment to run the numpy path instead.
Both paths produce identical results (tests compare them).
"""
import os
import warnings
from contextlib import contextmanager


def _nocompile(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = _nocompile
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")

_use_numba = os.getenv("ENERGY_FS_USE_NUMBA", "1") != "0"
if _use_numba and not HAVE_NUMBA:  # pragma: no cover
    warnings.warn("Could not import numba, falling back to numpy kernels")
    _use_numba = False


def use_numba():
    return _use_numba


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` for subsequent kernel calls."""
    global _use_numba
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _use_numba = name == "numba"


@contextmanager
def backend(name):
    previous = "numba" if _use_numba else "numpy"
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
