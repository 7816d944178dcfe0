"""Kernel backend selection.

Two interchangeable implementations of the hot kernels exist:

* ``numpy`` -- pure numpy/BLAS (always available),
* ``cython`` -- the compiled extension ``_ckernels`` (built at install
  time; silently unavailable if compilation was skipped).

The active backend is chosen at import time: the ``KINSEG_BACKEND``
environment variable (``numpy``/``cython``/``auto``) wins, otherwise the
compiled backend is used when importable.  ``use()`` switches at runtime
(tests and the benchmark do this).
"""

import os

from . import numpy_kernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = {"numpy": numpy_kernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

KERNELS = ("conv1d_forward", "conv1d_backward", "lstm_forward",
           "lstm_backward", "gru_forward", "gru_backward")

_active = None
_active_name = None


def available() -> tuple:
    return tuple(sorted(_BACKENDS))


def use(name: str):
    """Select the kernel backend; returns the backing module."""
    global _active, _active_name
    if name == "auto":
        name = "cython" if "cython" in _BACKENDS else "numpy"
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available()}")
    _active = _BACKENDS[name]
    _active_name = name
    return _active


def active():
    return _active


def active_name() -> str:
    return _active_name


use(os.environ.get("KINSEG_BACKEND", "auto"))
