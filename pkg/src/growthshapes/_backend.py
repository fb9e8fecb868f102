"""Kernel backend selection.

The hot loops live in :mod:`growthshapes.kernels` and come in two flavours: a
numba-compiled path and a pure numpy fallback. The backend is read once from
the ``GROWTHSHAPES_BACKEND`` environment variable (``numba`` or ``numpy``) and
can be switched at runtime with :func:`set_backend` / :func:`use_backend`.
"""
import os
from contextlib import contextmanager

ENV_VAR = "GROWTHSHAPES_BACKEND"
BACKENDS = ("numba", "numpy")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _from_env():
    name = os.environ.get(ENV_VAR, "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"{ENV_VAR} must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


_current = _from_env()


def backend():
    return _current


def set_backend(name):
    global _current
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _current = name


@contextmanager
def use_backend(name):
    previous = _current
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def njit(func):
    """Compile ``func`` with numba when available, keeping the Python original
    reachable as ``func.py_func`` either way."""
    if not HAVE_NUMBA:
        func.py_func = func
        return func
    return numba.njit(cache=True, nogil=True)(func)
