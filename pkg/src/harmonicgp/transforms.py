"""Cyclic transforms of the input space.

A cyclic transform is a map G with G^T = identity for a finite minimal
period T.  Orbits {x, G(x), ..., G^{T-1}(x)} are the raw material for the
harmonic decomposition of an invariant kernel: every kernel evaluation on
an orbit is shared by all frequency parts, so transforms expose vectorized
orbit construction over batches of points.

All transforms act on points stored as rows.  A 1-D array is treated as a
single point and returned with the same rank.  Every kind is affine,
y = A x + b, which keeps gradients of downstream objectives with respect
to transformed inducing points exact: `pullback_rows` applies A^T to a
batch of output-side gradients.

Multi-way transforms combine J commuting factors with periods
(T_1, ..., T_J); their orbit is the full product grid, flattened
row-major, so factor j = J-1 varies fastest.
"""

import itertools
import math

import numpy as np

from .errors import CommutativityError, ParameterError, PeriodError, ShapeError
from .seeding import seed_stream

_PROBE_COUNT = 32
_MIN_MOTION = 1e-6


def _as_rows(x):
    x = np.asarray(x)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ShapeError(f"expected a point or a batch of row points, got ndim={x.ndim}")


class CyclicTransform:
    """Base class: a map of period `period` acting on row vectors."""

    kind = "base"
    period: int

    # Exact input dimension when the kind fixes one, else None (the kind
    # only requires a minimum dimension, see `min_dim`).
    dim = None
    min_dim = 1

    def check_dim(self, d: int) -> None:
        if self.dim is not None and d != self.dim:
            raise ShapeError(f"{self.kind} expects dimension {self.dim}, got {d}")
        if self.dim is None and d < self.min_dim:
            raise ShapeError(f"{self.kind} requires dimension >= {self.min_dim}, got {d}")

    @property
    def orbit_size(self) -> int:
        return self.period

    def apply(self, x, power: int = 1):
        """Return G^power(x).  Power 0 is the exact identity."""
        X, single = _as_rows(x)
        self.check_dim(X.shape[1])
        s = int(power) % self.period
        Y = X.copy() if s == 0 else self._apply_rows(X, s)
        return Y[0] if single else Y

    def apply_power_rows(self, X: np.ndarray, k: int) -> np.ndarray:
        return self.apply(X, k)

    def pullback_rows(self, G: np.ndarray, power: int = 1) -> np.ndarray:
        """Map gradients w.r.t. G^power(x) back to gradients w.r.t. x.

        For y = A x + b this is G @ A: each row g becomes A^T g.
        """
        s = int(power) % self.period
        if s == 0:
            return G.copy()
        return self._pullback_rows(G, s)

    def pullback_power_rows(self, G: np.ndarray, k: int) -> np.ndarray:
        return self.pullback_rows(G, k)

    def orbit(self, x) -> np.ndarray:
        """Stack [x, G(x), ..., G^{T-1}(x)] along a new leading axis."""
        X, single = _as_rows(x)
        out = np.stack([self.apply(X, s) for s in range(self.period)])
        return out[:, 0, :] if single else out

    def matrix_offset(self, power: int = 1, d: int | None = None):
        """Dense (A, b) with G^power(x) = A x + b, for tests and checks."""
        d = self.dim if d is None else d
        if d is None:
            raise ShapeError(f"{self.kind} needs an explicit dimension for a dense matrix")
        b = self.apply(np.zeros(d), power)
        A = (self.apply(np.eye(d), power) - b[None, :]).T
        return A, b

    def probes(self, rng: np.random.Generator, count: int = _PROBE_COUNT, d: int | None = None) -> np.ndarray:
        """Generic probe points for cyclicity and invariance checks."""
        if d is None:
            d = self.dim if self.dim is not None else self.min_dim
        self.check_dim(d)
        return rng.standard_normal((count, d))

    def _apply_rows(self, X: np.ndarray, s: int) -> np.ndarray:
        raise NotImplementedError

    def _pullback_rows(self, G: np.ndarray, s: int) -> np.ndarray:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        items = ", ".join(f"{k}={v!r}" for k, v in self.descriptor().items() if k != "kind")
        return f"{type(self).__name__}({items})"


class NegationMask(CyclicTransform):
    """Negate a fixed subset of coordinates; period 2."""

    kind = "negation_mask"
    period = 2

    def __init__(self, mask):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 1:
            raise ShapeError("mask must be a 1-D boolean array")
        if not mask.any():
            raise ParameterError("mask must negate at least one coordinate")
        self.mask = mask
        self.dim = mask.size
        self._sign = np.where(mask, -1.0, 1.0)

    def _apply_rows(self, X, s):
        return X * self._sign

    def _pullback_rows(self, G, s):
        return G * self._sign

    def descriptor(self):
        return {"kind": self.kind, "mask": self.mask.astype(int).tolist()}


class Rotation2D(CyclicTransform):
    """Rotate by 2*pi/T in the (i, j) coordinate plane."""

    kind = "rotation_2d"

    def __init__(self, i: int, j: int, period: int):
        if i == j or i < 0 or j < 0:
            raise ParameterError("plane axes must be distinct and non-negative")
        if int(period) < 2:
            raise ParameterError("period must be at least 2")
        self.i, self.j = int(i), int(j)
        self.period = int(period)
        self.min_dim = max(self.i, self.j) + 1

    def _apply_rows(self, X, s):
        theta = 2.0 * math.pi * s / self.period
        c, sn = math.cos(theta), math.sin(theta)
        Y = X.copy()
        xi, xj = X[:, self.i], X[:, self.j]
        Y[:, self.i] = c * xi - sn * xj
        Y[:, self.j] = sn * xi + c * xj
        return Y

    def _pullback_rows(self, G, s):
        # A is orthogonal; A^T rotates by -theta.
        theta = 2.0 * math.pi * s / self.period
        c, sn = math.cos(theta), math.sin(theta)
        H = G.copy()
        gi, gj = G[:, self.i], G[:, self.j]
        H[:, self.i] = c * gi + sn * gj
        H[:, self.j] = -sn * gi + c * gj
        return H

    def descriptor(self):
        return {"kind": self.kind, "i": self.i, "j": self.j, "period": self.period}


class UnitaryMatrix(CyclicTransform):
    """Multiply by a fixed unitary matrix U with U^T = identity.

    Complex matrices are accepted for kernel-level diagnostics; gradient
    pullback is only defined for real (orthogonal) matrices.
    """

    kind = "unitary_matrix"

    def __init__(self, matrix, period: int):
        U = np.asarray(matrix)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise ShapeError("matrix must be square")
        if int(period) < 2:
            raise ParameterError("period must be at least 2")
        gram = U.conj().T @ U
        if np.max(np.abs(gram - np.eye(U.shape[0]))) > 1e-10:
            raise ParameterError("matrix is not unitary within 1e-10")
        self.period = int(period)
        self.dim = U.shape[0]
        self.matrix_ = U
        # Eager cyclicity check: catches a wrong period at construction.
        power = np.linalg.matrix_power(U, self.period)
        if np.max(np.abs(power - np.eye(self.dim))) > 1e-8:
            raise PeriodError(f"matrix^{self.period} deviates from identity beyond 1e-8")
        self._powers = {0: np.eye(self.dim, dtype=U.dtype)}
        for s in range(1, self.period):
            self._powers[s] = self._powers[s - 1] @ U

    def _apply_rows(self, X, s):
        return X @ self._powers[s].T

    def _pullback_rows(self, G, s):
        A = self._powers[s]
        if np.iscomplexobj(A):
            raise ParameterError("gradient pullback requires a real orthogonal matrix")
        return G @ A

    def descriptor(self):
        U = self.matrix_
        d = {"kind": self.kind, "period": self.period, "matrix": np.real(U).tolist()}
        if np.iscomplexobj(U):
            d["matrix_imag"] = np.imag(U).tolist()
        return d


class TorusShift(CyclicTransform):
    """Shift one coordinate by period/T on a circle of circumference `domain_period`.

    Outputs wrap into [0, domain_period) with a non-negative remainder, so
    the transform's domain is the canonical torus chart.  Probes for
    cyclicity checks are drawn uniformly from that chart.
    """

    kind = "torus_shift"

    def __init__(self, index: int, shift: float, domain_period: float):
        if index < 0:
            raise ParameterError("index must be non-negative")
        if domain_period <= 0:
            raise ParameterError("domain period must be positive")
        if shift <= 0:
            raise ParameterError("shift must be positive")
        ratio = domain_period / shift
        T = round(ratio)
        if T < 2 or abs(T * shift - domain_period) > 1e-9 * domain_period:
            raise ParameterError("shift must divide the domain period with T >= 2")
        self.index = int(index)
        self.shift = float(shift)
        self.domain_period = float(domain_period)
        self.period = int(T)
        self.min_dim = self.index + 1

    def _apply_rows(self, X, s):
        Y = np.array(X, dtype=float, copy=True)
        Y[:, self.index] = (Y[:, self.index] + s * self.shift) % self.domain_period
        return Y

    def _pullback_rows(self, G, s):
        # Pure translation: the Jacobian is the identity almost everywhere.
        return G.copy()

    def probes(self, rng, count=_PROBE_COUNT, d=None):
        if d is None:
            d = self.min_dim
        self.check_dim(d)
        P = rng.standard_normal((count, d))
        P[:, self.index] = rng.uniform(0.0, self.domain_period, size=count)
        return P

    def descriptor(self):
        return {
            "kind": self.kind,
            "index": self.index,
            "shift": self.shift,
            "domain_period": self.domain_period,
        }


class _ImagePermutation(CyclicTransform):
    """Base for transforms that permute pixels of flattened (H, W) images."""

    def __init__(self, height: int, width: int):
        if height < 1 or width < 1:
            raise ParameterError("image dimensions must be positive")
        self.height = int(height)
        self.width = int(width)
        self.dim = self.height * self.width

    def _perm(self, s: int) -> np.ndarray:
        raise NotImplementedError

    def _apply_rows(self, X, s):
        return X[:, self._perm(s)]

    def _pullback_rows(self, G, s):
        out = np.empty_like(G)
        out[:, self._perm(s)] = G
        return out


class ImageFlipUD(_ImagePermutation):
    """Flip images top to bottom; period 2."""

    kind = "image_flip_ud"
    period = 2

    def __init__(self, height, width):
        super().__init__(height, width)
        idx = np.arange(self.dim).reshape(self.height, self.width)
        self._p = idx[::-1, :].ravel()

    def _perm(self, s):
        return self._p

    def descriptor(self):
        return {"kind": self.kind, "height": self.height, "width": self.width}


class ImageFlipLR(_ImagePermutation):
    """Flip images left to right; period 2."""

    kind = "image_flip_lr"
    period = 2

    def __init__(self, height, width):
        super().__init__(height, width)
        idx = np.arange(self.dim).reshape(self.height, self.width)
        self._p = idx[:, ::-1].ravel()

    def _perm(self, s):
        return self._p

    def descriptor(self):
        return {"kind": self.kind, "height": self.height, "width": self.width}


class ImageTranslate(_ImagePermutation):
    """Cyclically translate images by `pixels` along `axis` (0 = vertical).

    The period is size/gcd(size, pixels) along the chosen axis.
    """

    kind = "image_translate"

    def __init__(self, height, width, axis: int, pixels: int):
        super().__init__(height, width)
        if axis not in (0, 1):
            raise ParameterError("axis must be 0 (vertical) or 1 (horizontal)")
        pixels = int(pixels)
        size = self.height if axis == 0 else self.width
        if pixels % size == 0:
            raise ParameterError("translation must move pixels (pixels % size != 0)")
        self.axis = axis
        self.pixels = pixels
        self.period = size // math.gcd(size, pixels % size)
        idx = np.arange(self.dim).reshape(self.height, self.width)
        self._perms = {
            s: np.roll(idx, s * pixels, axis=axis).ravel() for s in range(self.period)
        }

    def _perm(self, s):
        return self._perms[s]

    def descriptor(self):
        return {
            "kind": self.kind,
            "height": self.height,
            "width": self.width,
            "axis": self.axis,
            "pixels": self.pixels,
        }


class PcaNegation(CyclicTransform):
    """Reflect across the span of orthonormal direction columns D.

    G(x) = x - 2 D D^T x negates the component of x inside span(D) and is
    an involution, so the period is 2.  Directions typically come from
    `data.pca_directions`.
    """

    kind = "pca_negation"
    period = 2

    def __init__(self, directions):
        D = np.asarray(directions, dtype=float)
        if D.ndim == 1:
            D = D[:, None]
        if D.ndim != 2:
            raise ShapeError("directions must be a (d, r) array of columns")
        gram = D.T @ D
        if np.max(np.abs(gram - np.eye(D.shape[1]))) > 1e-8:
            raise ParameterError("direction columns must be orthonormal within 1e-8")
        self.directions = D
        self.dim = D.shape[0]

    def _apply_rows(self, X, s):
        return X - 2.0 * (X @ self.directions) @ self.directions.T

    def _pullback_rows(self, G, s):
        # A = I - 2 D D^T is symmetric.
        return self._apply_rows(G, s)

    def descriptor(self):
        return {"kind": self.kind, "directions": self.directions.tolist()}


class MultiWayTransform:
    """J commuting cyclic factors acting jointly.

    The orbit enumerates the product grid of factor powers in row-major
    order (the last factor varies fastest), matching the flattening used
    by the multi-way discrete Fourier weights.
    """

    kind = "multi_way"

    def __init__(self, factors, check_seed: int = 0):
        factors = list(factors)
        if len(factors) < 1:
            raise ParameterError("need at least one factor")
        for f in factors:
            if isinstance(f, MultiWayTransform):
                raise ParameterError("factors must be single cyclic transforms")
        self.factors = factors
        self.periods = tuple(f.period for f in factors)
        if len(factors) > 1:
            self._check_commuting(check_seed)

    def _check_commuting(self, seed):
        rng = seed_stream(seed, "multiway-commute")
        P = self.probes(rng)
        for a, b in itertools.combinations(self.factors, 2):
            ab = a.apply(b.apply(P))
            ba = b.apply(a.apply(P))
            dev = float(np.max(np.abs(ab - ba)))
            if dev > 1e-10:
                raise CommutativityError(
                    f"factors {a.kind} and {b.kind} do not commute: deviation {dev:.3e}"
                )

    @property
    def orbit_size(self) -> int:
        return int(np.prod(self.periods))

    @property
    def dim(self):
        dims = [f.dim for f in self.factors if f.dim is not None]
        return dims[0] if dims else None

    @property
    def min_dim(self) -> int:
        return max(f.min_dim if f.dim is None else f.dim for f in self.factors)

    def power_list(self):
        """All power tuples in row-major order."""
        return list(itertools.product(*(range(T) for T in self.periods)))

    def apply(self, x, powers):
        if len(powers) != len(self.factors):
            raise ShapeError(f"expected {len(self.factors)} powers, got {len(powers)}")
        y = x
        for f, s in zip(self.factors, powers):
            y = f.apply(y, s)
        return y

    def apply_power_rows(self, X, k: int):
        return self.apply(X, np.unravel_index(int(k), self.periods))

    def pullback_power_rows(self, G, k: int):
        powers = np.unravel_index(int(k), self.periods)
        H = G
        for f, s in zip(reversed(self.factors), reversed(powers)):
            H = f.pullback_rows(H, s)
        return H

    def orbit(self, x) -> np.ndarray:
        X, single = _as_rows(x)
        out = np.stack([self.apply_power_rows(X, k) for k in range(self.orbit_size)])
        return out[:, 0, :] if single else out

    def probes(self, rng, count=_PROBE_COUNT, d=None):
        if d is None:
            d = self.dim if self.dim is not None else self.min_dim
        P = rng.standard_normal((count, d))
        for f in self.factors:
            if isinstance(f, TorusShift):
                P[:, f.index] = rng.uniform(0.0, f.domain_period, size=count)
        return P

    def descriptor(self):
        return {"kind": self.kind, "factors": [f.descriptor() for f in self.factors]}

    def __repr__(self):
        return f"MultiWayTransform({self.factors!r})"


_KINDS = {
    cls.kind: cls
    for cls in (
        NegationMask,
        Rotation2D,
        UnitaryMatrix,
        TorusShift,
        ImageFlipUD,
        ImageFlipLR,
        ImageTranslate,
        PcaNegation,
    )
}


def from_descriptor(desc: dict):
    """Rebuild a transform from its serialized descriptor."""
    if "kind" not in desc:
        raise ParameterError("descriptor missing 'kind'")
    kind = desc["kind"]
    if kind == "multi_way":
        return MultiWayTransform([from_descriptor(f) for f in desc["factors"]])
    if kind not in _KINDS:
        raise ParameterError(f"unknown transform kind {kind!r}")
    d = {k: v for k, v in desc.items() if k != "kind"}
    if kind == "negation_mask":
        return NegationMask(np.asarray(d["mask"], dtype=bool))
    if kind == "unitary_matrix":
        U = np.asarray(d["matrix"], dtype=float)
        if "matrix_imag" in d:
            U = U + 1j * np.asarray(d["matrix_imag"], dtype=float)
        return UnitaryMatrix(U, d["period"])
    if kind == "pca_negation":
        return PcaNegation(np.asarray(d["directions"], dtype=float))
    return _KINDS[kind](**d)


def apply(transform, x, power: int = 1):
    """Functional form of `transform.apply`."""
    return transform.apply(x, power)


def orbit(transform, x) -> np.ndarray:
    """Stack the full orbit of x under the transform (row-major for multi-way)."""
    return transform.orbit(x)


def compose(*transforms) -> MultiWayTransform:
    """Combine commuting cyclic transforms into a multi-way transform."""
    return MultiWayTransform(transforms)


def verify_cyclic(transform, probes=None, seed: int = 0, tol: float = 1e-8) -> float:
    """Check G^T = identity and minimality of T by repeated application.

    Applies the transform one power at a time to probe points (default: 32
    seeded draws from the transform's probe distribution), so floating-point
    drift of the actual composition chain is what gets measured.  Returns the
    max deviation of G^T from the identity; raises PeriodError if it exceeds
    `tol` or if some intermediate power already acts as the identity.
    """
    if isinstance(transform, MultiWayTransform):
        return max(verify_cyclic(f, probes, seed, tol) for f in transform.factors)
    if probes is None:
        probes = transform.probes(seed_stream(seed, "verify-cyclic"))
    P = np.asarray(probes)
    if P.ndim != 2:
        raise ShapeError("probes must be a (count, d) array")
    Y = P
    for t in range(1, transform.period):
        Y = transform.apply(Y, 1)
        motion = float(np.max(np.abs(Y - P)))
        if motion <= _MIN_MOTION:
            raise PeriodError(
                f"{transform.kind}: power {t} already acts as the identity on probes; "
                f"period {transform.period} is not minimal"
            )
    Y = transform.apply(Y, 1)
    deviation = float(np.max(np.abs(Y - P)))
    if deviation > tol:
        raise PeriodError(
            f"{transform.kind}: G^{transform.period} deviates from identity by "
            f"{deviation:.3e} (tol {tol:.1e})"
        )
    return deviation
