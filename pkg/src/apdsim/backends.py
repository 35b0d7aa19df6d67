"""Kernel backend selection: numba-compiled or plain Python.

Both backends execute the identical code object `_kernel.run_segment`, so
traces are bit-for-bit equal; the jit path is just faster.  Selection
order: explicit argument, then the APDSIM_BACKEND environment variable
("jit" or "py"), then jit when numba is importable.

The plain path needs the errstate guard because numpy warns on wrapped
uint64 scalar arithmetic, which the splitmix64 mixer relies on; compiled
code wraps silently.
"""

import os

import numpy as np

from . import _kernel

try:
    from numba import njit
    _JIT_SEGMENT = njit(cache=True)(_kernel.run_segment)
except ImportError:
    _JIT_SEGMENT = None


def _plain_segment(*args):
    with np.errstate(over="ignore"):
        return _kernel.run_segment(*args)


def available():
    """Names of the usable backends, preferred first."""
    return ("jit", "py") if _JIT_SEGMENT is not None else ("py",)


def select(name=None):
    """Resolve a backend name to the segment-runner callable."""
    if name is None:
        name = os.environ.get("APDSIM_BACKEND") or available()[0]
    if name == "py":
        return _plain_segment
    if name == "jit":
        if _JIT_SEGMENT is None:
            raise RuntimeError("jit backend requested but numba is not installed")
        return _JIT_SEGMENT
    raise ValueError(f"unknown backend {name!r}; choose from {available()}")
