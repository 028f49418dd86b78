"""Harmonic decomposition of transform-invariant kernels.

A kernel k that is invariant under a cyclic transform G of period T splits
into T frequency parts

    k_t(x, x') = sum_s F[t, s] k(x, G^s(x')),     F[t, s] = exp(-2i pi t s / T) / T,

which are themselves positive semi-definite, mutually orthogonal as
covariance functions, and sum back to k.  Each part obeys the shift
property k_t(x, G(x')) = exp(2i pi t / T) k_t(x, x'), so part t carries the
frequency-t component of the kernel along orbits.

Because conjugate frequencies are complex conjugates of each other for a
real kernel, pairing t with T - t yields a real-valued resolution with
floor(T/2) + 1 parts:

    r_0 = k_0,    r_{T/2} = k_{T/2} (T even),    r_t = k_t + k_{T-t} otherwise,

with cosine weights (2/T) cos(2 pi t s / T) on the orbit (the paired rows)
and un-doubled weights for the self-paired t = 0 and t = T/2 rows.  The
parts of a multi-way transform with periods (T_1, ..., T_J) are tensor
products of per-factor parts over the row-major flattened orbit; the real
resolution then has prod_j (floor(T_j/2) + 1) parts.

Orbit kernel values are computed once per pair of point sets and reused
across all parts: every part Gram is a weighted sum of the same stack.
"""

import itertools
from functools import reduce

import numpy as np

from . import kernels as _kernels
from .errors import ParameterError, ShapeError
from .transforms import MultiWayTransform

CONSTRUCTION_TOL = 1e-8


def dft_matrix(T: int) -> np.ndarray:
    """The (1/T)-normalized DFT matrix F[t, s] = exp(-2i pi t s / T) / T.

    Rows are the frequency filters of the decomposition; the inverse of F
    is T F^H.
    """
    if int(T) < 1:
        raise ParameterError("T must be a positive integer")
    T = int(T)
    t = np.arange(T)
    return np.exp(-2j * np.pi * np.outer(t, t) / T) / T


def complex_weights(T: int, t: int) -> np.ndarray:
    """Orbit weights of complex part t: row t of the DFT matrix."""
    if not 0 <= t < T:
        raise ParameterError(f"frequency index {t} outside range(0, {T})")
    s = np.arange(T)
    return np.exp(-2j * np.pi * t * s / T) / T


def real_weights(T: int, t: int) -> np.ndarray:
    """Orbit weights of real-resolved part t, for t in 0..floor(T/2).

    t = 0 and (for even T) t = T/2 are self-conjugate and keep weight 1/T;
    interior parts pair t with T - t, giving (2/T) cos(2 pi t s / T).
    """
    if not 0 <= t <= T // 2:
        raise ParameterError(f"real part index {t} outside range(0, {T // 2 + 1})")
    s = np.arange(T)
    if t == 0:
        return np.ones(T) / T
    if 2 * t == T:
        return np.where(s % 2 == 0, 1.0, -1.0) / T
    return 2.0 * np.cos(2.0 * np.pi * t * s / T) / T


def _factor_periods(transform) -> tuple:
    if isinstance(transform, MultiWayTransform):
        return transform.periods
    return (transform.period,)


def _flat_weights(per_factor: list) -> np.ndarray:
    """Row-major flatten of the outer product of per-factor weight vectors."""
    return reduce(np.multiply.outer, per_factor).ravel()


def orbit_gram_stack(kernel, transform, X, X2=None) -> np.ndarray:
    """Stack k(X, G^s(X2)) over all orbit powers s, shape (orbit, n, m).

    The transform acts on the second argument; every part Gram is a
    weighted sum over the leading axis of this stack.
    """
    X = np.asarray(X)
    X2 = X if X2 is None else np.asarray(X2)
    return np.stack(
        [
            _kernels.gram(kernel, X, transform.apply_power_rows(X2, s))
            for s in range(transform.orbit_size)
        ]
    )


def orbit_pair_stack(kernel, transform, X, Y=None) -> np.ndarray:
    """Stack of row-paired values k(x_i, G^s(y_i)), shape (orbit, n)."""
    X = np.asarray(X)
    Y = X if Y is None else np.asarray(Y)
    return np.stack(
        [
            _kernels.pair_vals(kernel, X, transform.apply_power_rows(Y, s))
            for s in range(transform.orbit_size)
        ]
    )


class HarmonicPart:
    """One frequency part of a decomposed kernel.

    Evaluations are weighted sums of base-kernel values over the orbit of
    the second argument; `weights` has length transform.orbit_size and is
    complex for mode "complex", real for mode "real".
    """

    def __init__(self, kernel, transform, index, mode: str, weights: np.ndarray):
        if mode not in ("complex", "real"):
            raise ParameterError(f"unknown part mode {mode!r}")
        weights = np.asarray(weights)
        if weights.shape != (transform.orbit_size,):
            raise ShapeError("weights must have one entry per orbit power")
        self.kernel = kernel
        self.transform = transform
        self.index = index
        self.mode = mode
        self.weights = weights

    def gram(self, X, X2=None) -> np.ndarray:
        stack = orbit_gram_stack(self.kernel, self.transform, X, X2)
        return np.tensordot(self.weights, stack, axes=(0, 0))

    def eval(self, x, x2) -> complex:
        x = np.atleast_1d(np.asarray(x))
        x2 = np.atleast_1d(np.asarray(x2))
        return complex(self.gram(x[None, :], x2[None, :])[0, 0])

    def pair_vals(self, X, Y=None) -> np.ndarray:
        stack = orbit_pair_stack(self.kernel, self.transform, X, Y)
        return np.tensordot(self.weights, stack, axes=(0, 0))

    def __repr__(self):
        return f"HarmonicPart(index={self.index!r}, mode={self.mode!r})"


def harmonic_eval(kernel, transform, t: int, x, x2) -> complex:
    """Complex part t of a single-factor transform, evaluated at one pair."""
    if isinstance(transform, MultiWayTransform):
        raise ParameterError("use multiway_harmonic_eval for multi-way transforms")
    part = HarmonicPart(kernel, transform, t, "complex", complex_weights(transform.period, t))
    return part.eval(x, x2)


def multiway_harmonic_eval(kernel, transform, t_vec, x, x2) -> complex:
    """Complex part (t_1, ..., t_J) of a multi-way transform at one pair."""
    periods = _factor_periods(transform)
    t_vec = tuple(int(t) for t in np.atleast_1d(t_vec))
    if len(t_vec) != len(periods):
        raise ShapeError(f"expected {len(periods)} frequency indices, got {len(t_vec)}")
    w = _flat_weights([complex_weights(T, t) for T, t in zip(periods, t_vec)])
    part = HarmonicPart(kernel, transform, t_vec, "complex", w)
    return part.eval(x, x2)


def real_pair_eval(kernel, transform, t: int, x, x2) -> complex:
    """Real-resolved part t (pairing t with T - t) at one pair of points."""
    if isinstance(transform, MultiWayTransform):
        raise ParameterError("multi-way real parts are built by real_decomposition")
    part = HarmonicPart(kernel, transform, t, "real", real_weights(transform.period, t))
    return part.eval(x, x2)


def harmonic_gram(kernel, transform, index, X, X2=None) -> np.ndarray:
    """Gram matrix of one complex part; `index` is an int or a tuple."""
    periods = _factor_periods(transform)
    idx = tuple(int(t) for t in np.atleast_1d(index))
    if len(idx) != len(periods):
        raise ShapeError(f"expected {len(periods)} frequency indices, got {len(idx)}")
    w = _flat_weights([complex_weights(T, t) for T, t in zip(periods, idx)])
    part = HarmonicPart(kernel, transform, index, "complex", w)
    return part.gram(X, X2)


def complex_decomposition(kernel, transform, verify: bool = True, seed: int = 0):
    """All complex frequency parts; orbit-size many, summing back to k."""
    if verify:
        _kernels.verify_invariance(kernel, transform, seed=seed, tol=CONSTRUCTION_TOL)
    periods = _factor_periods(transform)
    single = not isinstance(transform, MultiWayTransform)
    parts = []
    for t_vec in itertools.product(*(range(T) for T in periods)):
        w = _flat_weights([complex_weights(T, t) for T, t in zip(periods, t_vec)])
        index = t_vec[0] if single else t_vec
        parts.append(HarmonicPart(kernel, transform, index, "complex", w))
    return parts


def real_decomposition(kernel, transform, verify: bool = True, seed: int = 0):
    """The real-valued resolution of the decomposition.

    Returns floor(T/2) + 1 parts for a single factor and the tensor
    product of per-factor pairings for a multi-way transform.  Kernel
    invariance under the transform is re-verified on seeded probes at
    construction (tolerance 1e-8) unless `verify` is False.
    """
    if verify:
        _kernels.verify_invariance(kernel, transform, seed=seed, tol=CONSTRUCTION_TOL)
    periods = _factor_periods(transform)
    single = not isinstance(transform, MultiWayTransform)
    parts = []
    for t_vec in itertools.product(*(range(T // 2 + 1) for T in periods)):
        w = _flat_weights([real_weights(T, t) for T, t in zip(periods, t_vec)])
        index = t_vec[0] if single else t_vec
        parts.append(HarmonicPart(kernel, transform, index, "real", w))
    return parts


def part_grams(parts, X, X2=None) -> list:
    """Gram matrices of several parts over one shared orbit stack.

    All parts must share the same kernel and transform; the base-kernel
    orbit values are computed once.
    """
    if not parts:
        return []
    kernel, transform = parts[0].kernel, parts[0].transform
    for p in parts[1:]:
        if p.kernel is not kernel or p.transform is not transform:
            raise ParameterError("parts must share one kernel and transform")
    stack = orbit_gram_stack(kernel, transform, X, X2)
    return [np.tensordot(p.weights, stack, axes=(0, 0)) for p in parts]


def decomposition_residual(parts, X, X2=None) -> float:
    """Max |sum_t k_t - k| over the given evaluation points."""
    grams = part_grams(parts, X, X2)
    total = np.sum(grams, axis=0)
    base = _kernels.gram(parts[0].kernel, np.asarray(X), None if X2 is None else np.asarray(X2))
    return float(np.max(np.abs(total - base)))
