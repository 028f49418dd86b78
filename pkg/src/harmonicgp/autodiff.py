"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough of a tape for variational GP objectives: elementwise
arithmetic with numpy broadcasting, matrix products, Cholesky and
triangular solves, the stable normal log-CDF, and the structured ops
needed to parameterize covariance factors.  Gradients are accumulated by
a topological sweep from the output scalar.

Leaves are created with `Var(array)`; everything else should be built
from the ops here so the backward pass sees the whole graph.  Constants
(plain arrays or scalars) can be mixed in freely and receive no gradient.
"""

import numpy as np
from scipy.linalg import solve_triangular as _solve_tri
from scipy.special import log_ndtr as _log_ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


class Var:
    """A node in the computation graph holding a float64 array."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    # -- graph mechanics ------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar output")
        order = []
        seen = set()

        def visit(v):
            if id(v) in seen:
                return
            seen.add(id(v))
            for p in v._parents:
                visit(p)
            order.append(v)

        visit(self)
        for v in order:
            v.grad = np.zeros_like(v.data)
        self.grad = np.ones_like(self.data)
        for v in reversed(order):
            if v._backward is not None:
                v._backward(v.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Var) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return mul(reciprocal(self), other)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _lift(x):
    """Constant (no-gradient) operand as a raw array."""
    return x.data if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def add(a, b) -> Var:
    av, bv = isinstance(a, Var), isinstance(b, Var)
    data = _lift(a) + _lift(b)
    parents = tuple(x for x in (a, b) if isinstance(x, Var))
    out = Var(data, parents)

    def backward(g):
        if av:
            a.grad += _unbroadcast(g, a.data.shape)
        if bv:
            b.grad += _unbroadcast(g, b.data.shape)

    out._backward = backward
    return out


def mul(a, b) -> Var:
    av, bv = isinstance(a, Var), isinstance(b, Var)
    ad, bd = _lift(a), _lift(b)
    out = Var(ad * bd, tuple(x for x in (a, b) if isinstance(x, Var)))

    def backward(g):
        if av:
            a.grad += _unbroadcast(g * bd, ad.shape)
        if bv:
            b.grad += _unbroadcast(g * ad, bd.shape)

    out._backward = backward
    return out


def reciprocal(a: Var) -> Var:
    out = Var(1.0 / a.data, (a,))

    def backward(g):
        a.grad += -g / (a.data * a.data)

    out._backward = backward
    return out


def exp(a: Var) -> Var:
    e = np.exp(a.data)
    out = Var(e, (a,))

    def backward(g):
        a.grad += g * e

    out._backward = backward
    return out


def log(a: Var) -> Var:
    out = Var(np.log(a.data), (a,))

    def backward(g):
        a.grad += g / a.data

    out._backward = backward
    return out


def sqrt(a: Var) -> Var:
    r = np.sqrt(a.data)
    out = Var(r, (a,))

    def backward(g):
        a.grad += g * (0.5 / r)

    out._backward = backward
    return out


def square(a: Var) -> Var:
    out = Var(a.data * a.data, (a,))

    def backward(g):
        a.grad += g * (2.0 * a.data)

    out._backward = backward
    return out


def power_const(a: Var, c: float) -> Var:
    """Elementwise a**c for a constant exponent."""
    out = Var(a.data**c, (a,))

    def backward(g):
        a.grad += g * (c * a.data ** (c - 1))

    out._backward = backward
    return out


def softplus(a: Var) -> Var:
    """log(1 + exp(x)), evaluated stably for large |x|."""
    x = a.data
    s = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    out = Var(s, (a,))
    e = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        a.grad += g * sig

    out._backward = backward
    return out


def softplus_inverse(y):
    """Numpy-only inverse of softplus, for parameter initialization."""
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def maximum_const(a: Var, c: float) -> Var:
    """Elementwise max(a, c) with gradient zeroed on the clipped side."""
    mask = a.data > c
    out = Var(np.where(mask, a.data, c), (a,))

    def backward(g):
        a.grad += g * mask

    out._backward = backward
    return out


def transpose(a: Var) -> Var:
    out = Var(a.data.T, (a,))

    def backward(g):
        a.grad += g.T

    out._backward = backward
    return out


def reshape(a: Var, shape) -> Var:
    old = a.data.shape
    out = Var(a.data.reshape(shape), (a,))

    def backward(g):
        a.grad += g.reshape(old)

    out._backward = backward
    return out


def vsum(a: Var, axis=None, keepdims: bool = False) -> Var:
    out = Var(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def backward(g):
        if axis is None:
            a.grad += np.broadcast_to(g, a.data.shape)
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a.grad += np.broadcast_to(ge, a.data.shape)

    out._backward = backward
    return out


def matmul(a, b) -> Var:
    av, bv = isinstance(a, Var), isinstance(b, Var)
    ad, bd = _lift(a), _lift(b)
    if ad.ndim != 2 or bd.ndim != 2:
        raise ValueError("matmul expects 2-D operands; use matvec for vectors")
    out = Var(ad @ bd, tuple(x for x in (a, b) if isinstance(x, Var)))

    def backward(g):
        if av:
            a.grad += g @ bd.T
        if bv:
            b.grad += ad.T @ g

    out._backward = backward
    return out


def matvec(a, x) -> Var:
    """Matrix-vector product A @ x with A (n, m) and x (m,)."""
    av, xv = isinstance(a, Var), isinstance(x, Var)
    ad, xd = _lift(a), _lift(x)
    if ad.ndim != 2 or xd.ndim != 1:
        raise ValueError("matvec expects a 2-D matrix and a 1-D vector")
    out = Var(ad @ xd, tuple(v for v in (a, x) if isinstance(v, Var)))

    def backward(g):
        if av:
            a.grad += np.outer(g, xd)
        if xv:
            x.grad += ad.T @ g

    out._backward = backward
    return out


def diag_part(a: Var) -> Var:
    out = Var(np.diag(a.data).copy(), (a,))

    def backward(g):
        gm = np.zeros_like(a.data)
        np.fill_diagonal(gm, g)
        a.grad += gm

    out._backward = backward
    return out


def fill_lower(strict: Var, diag: Var) -> Var:
    """Assemble a lower-triangular matrix from packed strict-lower entries
    (row-major) and a diagonal vector."""
    m = diag.data.size
    idx = np.tril_indices(m, k=-1)
    M = np.zeros((m, m))
    M[idx] = strict.data
    M[np.diag_indices(m)] = diag.data
    out = Var(M, (strict, diag))

    def backward(g):
        strict.grad += g[idx]
        diag.grad += g[np.diag_indices(m)]

    out._backward = backward
    return out


def cholesky(a: Var) -> Var:
    """Lower Cholesky factor.  The input must already be jittered."""
    L = np.linalg.cholesky(a.data)
    out = Var(L, (a,))

    def backward(g):
        # Murray-style reverse mode: dA = (M + M^T)/2 with
        # M = L^{-T} Phi(L^T g) L^{-1}, Phi = lower triangle, diagonal halved.
        P = np.tril(L.T @ g)
        P[np.diag_indices_from(P)] *= 0.5
        Y = _solve_tri(L, P, lower=True, trans=1)
        M = _solve_tri(L, Y.T, lower=True, trans=1).T
        a.grad += 0.5 * (M + M.T)

    out._backward = backward
    return out


def solve_lower(L: Var, B, transposed: bool = False) -> Var:
    """Solve L X = B (or L^T X = B when `transposed`) for lower-triangular L."""
    Lv, Bv = isinstance(L, Var), isinstance(B, Var)
    Ld, Bd = _lift(L), _lift(B)
    vec = Bd.ndim == 1
    B2 = Bd[:, None] if vec else Bd
    X = _solve_tri(Ld, B2, lower=True, trans=1 if transposed else 0)
    out = Var(X[:, 0] if vec else X, tuple(x for x in (L, B) if isinstance(x, Var)))

    def backward(g):
        g2 = g[:, None] if vec else g
        X2 = X
        if transposed:
            dB = _solve_tri(Ld, g2, lower=True, trans=0)
            dL = -X2 @ dB.T
        else:
            dB = _solve_tri(Ld, g2, lower=True, trans=1)
            dL = -dB @ X2.T
        if Lv:
            L.grad += np.tril(dL)
        if Bv:
            B.grad += dB[:, 0] if vec else dB

    out._backward = backward
    return out


def log_ndtr(a: Var) -> Var:
    """log of the standard normal CDF, stable in both tails."""
    y = _log_ndtr(a.data)
    out = Var(y, (a,))

    def backward(g):
        # d/dz log Phi(z) = exp(log pdf - log cdf), stable where Phi underflows.
        ratio = np.exp(-0.5 * a.data * a.data - _LOG_SQRT_2PI - y)
        a.grad += g * ratio

    out._backward = backward
    return out


def concat_rows(parts) -> Var:
    """Stack 1-D Vars into one long vector (for packing parameters)."""
    parts = [as_var(p) for p in parts]
    sizes = [p.data.size for p in parts]
    out = Var(np.concatenate([p.data.ravel() for p in parts]), tuple(parts))
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
            p.grad += g[a:b].reshape(p.data.shape)

    out._backward = backward
    return out
