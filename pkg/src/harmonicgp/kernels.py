"""Kernel functions paired with cyclic transforms.

Values are carried as complex128 end to end in this layer, even for real
kernels (which return zero imaginary parts): the harmonic decomposition
weights orbit evaluations by complex Fourier coefficients, and keeping a
single dtype through the stack avoids silent real-casting bugs.  Training
code uses the real-typed backend routines instead; tests pin the two
paths against each other.

Supported forms, all evaluated after an optional input map and scaling by
lengthscales (u = x / lengthscales):

* ``rbf``        variance * exp(-||u - u'||^2 / 2)
* ``matern32``   variance * (1 + sqrt(3) r) exp(-sqrt(3) r),  r = ||u - u'||
* ``polynomial`` variance * (<u, u'> + offset)^degree
* ``circle_toy`` exp(-i (t - t')) + exp(-2 i (t - t')) on 1-D angles

The ``sphere`` input map sends raw (longitude, latitude) in degrees to 3-D
unit-sphere coordinates, making a plain RBF invariant to torus shifts of
the longitude.
"""

import numpy as np

from .errors import InvarianceError, ParameterError, ShapeError
from .seeding import seed_stream

KINDS = ("rbf", "matern32", "polynomial", "circle_toy")
INPUT_MAPS = (None, "sphere")
_SQRT3 = np.sqrt(3.0)


class Kernel:
    """Descriptor for one kernel: a kind tag plus parameters.

    `lengthscales` is a positive scalar (shared across dimensions) or a
    per-dimension vector.  `variance` is the output scale.  `degree` and
    `offset` apply to the polynomial form only.
    """

    def __init__(
        self,
        kind: str,
        lengthscales=1.0,
        variance: float = 1.0,
        degree: int = 2,
        offset: float = 1.0,
        input_map: str | None = None,
    ):
        if kind not in KINDS:
            raise ParameterError(f"unknown kernel kind {kind!r}")
        if input_map not in INPUT_MAPS:
            raise ParameterError(f"unknown input map {input_map!r}")
        ell = np.asarray(lengthscales, dtype=float)
        if ell.ndim > 1:
            raise ShapeError("lengthscales must be a scalar or a 1-D vector")
        if np.any(ell <= 0):
            raise ParameterError("lengthscales must be positive")
        if variance <= 0:
            raise ParameterError("variance must be positive")
        if kind == "polynomial":
            if int(degree) < 1:
                raise ParameterError("degree must be a positive integer")
            if offset < 0:
                raise ParameterError("offset must be non-negative for positive definiteness")
        self.kind = kind
        self.lengthscales = ell
        self.variance = float(variance)
        self.degree = int(degree)
        self.offset = float(offset)
        self.input_map = input_map

    def eval(self, x, x2) -> complex:
        return eval_kernel(self, x, x2)

    def gram(self, X, X2=None) -> np.ndarray:
        return gram(self, X, X2)

    def descriptor(self) -> dict:
        d = {
            "kind": self.kind,
            "lengthscales": self.lengthscales.tolist(),
            "variance": self.variance,
        }
        if self.kind == "polynomial":
            d["degree"] = self.degree
            d["offset"] = self.offset
        if self.input_map is not None:
            d["input_map"] = self.input_map
        return d

    def __repr__(self):
        items = ", ".join(f"{k}={v!r}" for k, v in self.descriptor().items() if k != "kind")
        return f"Kernel({self.kind!r}, {items})"


def rbf(lengthscales=1.0, variance=1.0, input_map=None) -> Kernel:
    return Kernel("rbf", lengthscales, variance, input_map=input_map)


def matern32(lengthscales=1.0, variance=1.0, input_map=None) -> Kernel:
    return Kernel("matern32", lengthscales, variance, input_map=input_map)


def polynomial(degree=2, offset=1.0, variance=1.0, lengthscales=1.0) -> Kernel:
    return Kernel("polynomial", lengthscales, variance, degree=degree, offset=offset)


def circle_toy() -> Kernel:
    return Kernel("circle_toy")


def from_descriptor(desc: dict) -> Kernel:
    d = dict(desc)
    kind = d.pop("kind", None)
    if kind is None:
        raise ParameterError("kernel descriptor missing 'kind'")
    return Kernel(kind, **d)


def sphere_embed(X: np.ndarray) -> np.ndarray:
    """Map (longitude, latitude) in degrees to 3-D unit-sphere coordinates."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ShapeError("sphere input map expects (n, 2) raw (lon, lat) columns")
    lon = np.deg2rad(np.real(X[:, 0]))
    lat = np.deg2rad(np.real(X[:, 1]))
    return np.column_stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)]
    )


def _prep(kernel: Kernel, X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2:
        raise ShapeError("expected a batch of row points")
    if kernel.input_map == "sphere":
        X = sphere_embed(X)
    ell = kernel.lengthscales
    if ell.ndim == 1 and ell.size not in (1, X.shape[1]):
        raise ShapeError(
            f"lengthscales have size {ell.size} but inputs have dimension {X.shape[1]}"
        )
    return X / ell


def _abs_sqdist(U, V):
    # Works for real and complex rows: sum_k |u_k - v_k|^2.
    uu = np.einsum("ij,ij->i", U, U.conj()).real
    vv = np.einsum("ij,ij->i", V, V.conj()).real
    D = uu[:, None] + vv[None, :] - 2.0 * (U @ V.conj().T).real
    np.maximum(D, 0.0, out=D)
    return D


def gram(kernel: Kernel, X, X2=None) -> np.ndarray:
    """Complex Gram matrix k(X_i, X2_j); X2 defaults to X."""
    if kernel.kind == "circle_toy":
        T1 = np.asarray(X, dtype=float).reshape(-1)
        T2 = T1 if X2 is None else np.asarray(X2, dtype=float).reshape(-1)
        delta = T1[:, None] - T2[None, :]
        return np.exp(-1j * delta) + np.exp(-2j * delta)
    U = _prep(kernel, X)
    V = U if X2 is None else _prep(kernel, X2)
    if kernel.kind == "rbf":
        K = kernel.variance * np.exp(-0.5 * _abs_sqdist(U, V))
    elif kernel.kind == "matern32":
        A = _SQRT3 * np.sqrt(_abs_sqdist(U, V))
        K = kernel.variance * (1.0 + A) * np.exp(-A)
    else:  # polynomial
        inner = U @ V.conj().T
        K = kernel.variance * (inner + kernel.offset) ** kernel.degree
    return K.astype(np.complex128, copy=False)


def eval_kernel(kernel: Kernel, x, x2) -> complex:
    """Single evaluation k(x, x2) as a complex scalar."""
    x = np.atleast_1d(np.asarray(x))
    x2 = np.atleast_1d(np.asarray(x2))
    return complex(gram(kernel, x[None, :], x2[None, :])[0, 0])


def pair_vals(kernel: Kernel, X, Y) -> np.ndarray:
    """Row-paired evaluations k(x_i, y_i) as a complex vector."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise ShapeError("paired evaluation needs equal shapes")
    if kernel.kind == "circle_toy":
        delta = np.asarray(X, dtype=float).reshape(-1) - np.asarray(Y, dtype=float).reshape(-1)
        return np.exp(-1j * delta) + np.exp(-2j * delta)
    U = _prep(kernel, X)
    V = _prep(kernel, Y)
    diff = U - V
    if kernel.kind == "rbf":
        D = np.einsum("ij,ij->i", diff, diff.conj()).real
        vals = kernel.variance * np.exp(-0.5 * D)
    elif kernel.kind == "matern32":
        D = np.einsum("ij,ij->i", diff, diff.conj()).real
        A = _SQRT3 * np.sqrt(D)
        vals = kernel.variance * (1.0 + A) * np.exp(-A)
    else:
        inner = np.einsum("ij,ij->i", U, V.conj())
        vals = kernel.variance * (inner + kernel.offset) ** kernel.degree
    return vals.astype(np.complex128, copy=False)


def verify_invariance(kernel, transform, probes=None, seed: int = 0, tol: float = 1e-8) -> float:
    """Check k(G^s x, G^s x') = k(x, x') on probe pairs for all powers.

    For multi-way transforms each factor generator is checked (invariance
    under the generators implies invariance under the whole group).
    Returns the max absolute deviation; raises InvarianceError above `tol`.
    """
    if probes is None:
        rng = seed_stream(seed, "verify-invariance")
        if kernel.input_map == "sphere":
            # The sphere map fixes the domain: raw (lon, lat) in degrees.
            probes = np.column_stack(
                [rng.uniform(0.0, 360.0, 32), rng.uniform(-90.0, 90.0, 32)]
            )
        else:
            probes = transform.probes(rng)
    P = np.asarray(probes)
    base = gram(kernel, P)
    factors = transform.factors if hasattr(transform, "factors") else [transform]
    worst = 0.0
    for f in factors:
        for s in range(1, f.period):
            Q = f.apply(P, s)
            dev = float(np.max(np.abs(gram(kernel, Q) - base)))
            worst = max(worst, dev)
    if worst > tol:
        raise InvarianceError(
            f"kernel {kernel.kind} is not invariant under {getattr(transform, 'kind', '?')}: "
            f"max deviation {worst:.3e} (tol {tol:.1e})"
        )
    return worst
