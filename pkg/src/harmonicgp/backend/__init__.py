"""Cross-Gram computation backend.

Two interchangeable implementations of the hot inner kernels (fused
distance-plus-shape cross-Grams and their input gradients):

* ``cython`` -- compiled extension, used when the build produced it;
* ``numpy``  -- pure-Python fallback with identical semantics.

Selection happens at import time.  Set ``HGP_BACKEND=numpy`` or
``HGP_BACKEND=cython`` to force a choice; forcing ``cython`` when the
extension is missing raises ImportError rather than silently degrading.
Results agree between backends to floating-point rounding (~1e-12
relative), but bit-exact reproducibility is only guaranteed within a
single backend.
"""

import os

import numpy as np

from . import _fallback

_requested = os.environ.get("HGP_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "cython"):
    raise ImportError(f"HGP_BACKEND must be 'numpy' or 'cython', got {_requested!r}")

_impl = None
if _requested in ("", "cython"):
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "HGP_BACKEND=cython but the compiled extension is not available; "
                "reinstall with a C compiler or unset HGP_BACKEND"
            ) from None
if _impl is None:
    _impl = _fallback

NAME = _impl.NAME


def available_backends():
    names = ["numpy"]
    try:
        from . import _core  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def get_impl(name: str):
    """Fetch a backend module by name (used by parity tests and benchmarks)."""
    if name == "numpy":
        return _fallback
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")


def _prep(A, d_expected=None):
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("backend inputs must be 2-D row batches")
    if d_expected is not None and A.shape[1] != d_expected:
        raise ValueError(f"dimension mismatch: {A.shape[1]} != {d_expected}")
    return A


def rbf_cross(U, V):
    U = _prep(U)
    V = _prep(V, U.shape[1])
    return _impl.rbf_cross(U, V)


def rbf_cross_backward(U, V, E, dE):
    U = _prep(U)
    V = _prep(V, U.shape[1])
    E = np.ascontiguousarray(E, dtype=np.float64)
    dE = np.ascontiguousarray(dE, dtype=np.float64)
    return _impl.rbf_cross_backward(U, V, E, dE)


def matern32_cross(U, V):
    U = _prep(U)
    V = _prep(V, U.shape[1])
    return _impl.matern32_cross(U, V)


def matern32_cross_backward(U, V, dK):
    U = _prep(U)
    V = _prep(V, U.shape[1])
    dK = np.ascontiguousarray(dK, dtype=np.float64)
    return _impl.matern32_cross_backward(U, V, dK)
