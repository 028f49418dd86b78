"""Tape-level kernel and transform operations.

These bridge the autodiff graph to the compiled cross-Gram backend and to
the affine transform pullbacks, so variational objectives differentiate
exactly through kernel hyperparameters, inducing points, and orbits.
Inputs arrive raw; scaling by lengthscales and optional input maps happen
on the tape.
"""

import numpy as np

from . import autodiff as ad
from . import backend
from .errors import ParameterError

_DEG2RAD = np.pi / 180.0


def rbf_cross_op(U, V) -> ad.Var:
    """exp(-||u_i - v_j||^2 / 2) with backend-fused forward and backward."""
    Uv, Vv = isinstance(U, ad.Var), isinstance(V, ad.Var)
    Ud = U.data if Uv else np.asarray(U, dtype=float)
    Vd = V.data if Vv else np.asarray(V, dtype=float)
    E = backend.rbf_cross(Ud, Vd)
    out = ad.Var(E, tuple(x for x in (U, V) if isinstance(x, ad.Var)))

    def backward(g):
        dU, dV = backend.rbf_cross_backward(Ud, Vd, E, g)
        if Uv:
            U.grad += dU
        if Vv:
            V.grad += dV

    out._backward = backward
    return out


def matern32_cross_op(U, V) -> ad.Var:
    """(1 + sqrt(3) r) exp(-sqrt(3) r) cross-Gram via the backend."""
    Uv, Vv = isinstance(U, ad.Var), isinstance(V, ad.Var)
    Ud = U.data if Uv else np.asarray(U, dtype=float)
    Vd = V.data if Vv else np.asarray(V, dtype=float)
    K = backend.matern32_cross(Ud, Vd)
    out = ad.Var(K, tuple(x for x in (U, V) if isinstance(x, ad.Var)))

    def backward(g):
        dU, dV = backend.matern32_cross_backward(Ud, Vd, g)
        if Uv:
            U.grad += dU
        if Vv:
            V.grad += dV

    out._backward = backward
    return out


def rbf_pair_op(U, V) -> ad.Var:
    """Row-paired exp(-||u_i - v_i||^2 / 2)."""
    Uv, Vv = isinstance(U, ad.Var), isinstance(V, ad.Var)
    Ud = U.data if Uv else np.asarray(U, dtype=float)
    Vd = V.data if Vv else np.asarray(V, dtype=float)
    diff = Ud - Vd
    vals = np.exp(-0.5 * np.einsum("ij,ij->i", diff, diff))
    out = ad.Var(vals, tuple(x for x in (U, V) if isinstance(x, ad.Var)))

    def backward(g):
        scale = (g * vals)[:, None]
        if Uv:
            U.grad += -scale * diff
        if Vv:
            V.grad += scale * diff

    out._backward = backward
    return out


def matern32_pair_op(U, V) -> ad.Var:
    """Row-paired Matern 3/2 values on pre-scaled inputs."""
    Uv, Vv = isinstance(U, ad.Var), isinstance(V, ad.Var)
    Ud = U.data if Uv else np.asarray(U, dtype=float)
    Vd = V.data if Vv else np.asarray(V, dtype=float)
    diff = Ud - Vd
    D = np.einsum("ij,ij->i", diff, diff)
    A = np.sqrt(3.0 * D)
    vals = (1.0 + A) * np.exp(-A)
    out = ad.Var(vals, tuple(x for x in (U, V) if isinstance(x, ad.Var)))

    def backward(g):
        # dval/dD = -1.5 exp(-A); dD/dU = 2 diff.
        scale = (-3.0 * np.exp(-A) * g)[:, None]
        if Uv:
            U.grad += scale * diff
        if Vv:
            V.grad += -scale * diff

    out._backward = backward
    return out


def transform_power_op(transform, Z: ad.Var, power: int) -> ad.Var:
    """Apply G^power to rows of Z; backward uses the affine pullback A^T."""
    Y = transform.apply_power_rows(Z.data, power)
    if np.iscomplexobj(Y):
        raise ParameterError("training transforms must be real-valued")
    out = ad.Var(Y, (Z,))

    def backward(g):
        Z.grad += transform.pullback_power_rows(g, power)

    out._backward = backward
    return out


def sphere_embed_op(X) -> ad.Var:
    """(lon, lat) degrees to unit-sphere 3-D, differentiable in both angles."""
    Xv = isinstance(X, ad.Var)
    Xd = X.data if Xv else np.asarray(X, dtype=float)
    lon = Xd[:, 0] * _DEG2RAD
    lat = Xd[:, 1] * _DEG2RAD
    cl, sl = np.cos(lon), np.sin(lon)
    cp, sp = np.cos(lat), np.sin(lat)
    E = np.column_stack([cp * cl, cp * sl, sp])
    out = ad.Var(E, (X,) if Xv else ())

    def backward(g):
        dlon = _DEG2RAD * (g[:, 0] * (-cp * sl) + g[:, 1] * (cp * cl))
        dlat = _DEG2RAD * (g[:, 0] * (-sp * cl) + g[:, 1] * (-sp * sl) + g[:, 2] * cp)
        X.grad += np.column_stack([dlon, dlat])

    if Xv:
        out._backward = backward
    return out


class KernelOps:
    """Kernel evaluation on the tape for one model's hyperparameters.

    Holds the structural constants of a kernel (kind, input map, degree,
    offset) and evaluates cross-Grams / paired values given tape variables
    for log lengthscales and log variance.
    """

    def __init__(self, kind: str, input_map=None, degree: int = 2, offset: float = 1.0):
        if kind not in ("rbf", "matern32", "polynomial"):
            raise ParameterError(f"kernel kind {kind!r} is not trainable")
        self.kind = kind
        self.input_map = input_map
        self.degree = int(degree)
        self.offset = float(offset)

    def scale_inputs(self, X, log_ell: ad.Var) -> ad.Var:
        """Optional input map, then divide by lengthscales."""
        H = sphere_embed_op(X) if self.input_map == "sphere" else X
        inv_ell = ad.exp(ad.mul(log_ell, -1.0))
        return ad.mul(H, inv_ell)

    def cross0(self, U, V) -> ad.Var:
        """Unit-variance cross-Gram k0(U, V) for pre-scaled inputs."""
        if self.kind == "rbf":
            return rbf_cross_op(U, V)
        if self.kind == "matern32":
            return matern32_cross_op(U, V)
        inner = ad.matmul(U, ad.transpose(V))
        return ad.power_const(ad.add(inner, self.offset), self.degree)

    def pair0(self, U, V) -> ad.Var:
        """Unit-variance row-paired values k0(u_i, v_i) for pre-scaled inputs."""
        if self.kind == "rbf":
            return rbf_pair_op(U, V)
        if self.kind == "matern32":
            return matern32_pair_op(U, V)
        inner = ad.vsum(ad.mul(U, V), axis=1)
        return ad.power_const(ad.add(inner, self.offset), self.degree)

    def cross(self, U, V, log_var: ad.Var) -> ad.Var:
        """variance * k0(U, V) for pre-scaled inputs."""
        return ad.mul(ad.exp(log_var), self.cross0(U, V))

    def pair(self, U, V, log_var: ad.Var) -> ad.Var:
        """variance * k0(u_i, v_i) row-paired, for pre-scaled inputs."""
        return ad.mul(ad.exp(log_var), self.pair0(U, V))


def orbit_rows_op(transform, Z: ad.Var) -> ad.Var:
    """All orbit images [G^0 Z; ...; G^{S-1} Z] stacked into one row block.

    One node instead of one per power: the backward splits the incoming
    gradient into blocks and sums the affine pullbacks.
    """
    m = Z.data.shape[0]
    blocks = [transform.apply_power_rows(Z.data, s) for s in range(transform.orbit_size)]
    W = np.concatenate(blocks, axis=0)
    if np.iscomplexobj(W):
        raise ParameterError("training transforms must be real-valued")
    out = ad.Var(W, (Z,))

    def backward(g):
        acc = transform.pullback_power_rows(g[:m], 0)
        for s in range(1, len(blocks)):
            acc = acc + transform.pullback_power_rows(g[s * m : (s + 1) * m], s)
        Z.grad += acc

    out._backward = backward
    return out


def block_weighted_sum(E: ad.Var, weights, blocks: int) -> ad.Var:
    """sum_s w_s E[:, s*m:(s+1)*m] over `blocks` equal column blocks."""
    w = np.asarray(weights, dtype=float)
    n, wide = E.data.shape
    m = wide // blocks
    out = ad.Var(np.tensordot(w, E.data.reshape(n, blocks, m), axes=(0, 1)), (E,))

    def backward(g):
        E.grad += np.einsum("s,nm->nsm", w, g).reshape(n, wide)

    out._backward = backward
    return out


def block_weighted_sum_vec(vals: ad.Var, weights, blocks: int) -> ad.Var:
    """sum_s w_s vals[s*n:(s+1)*n] over `blocks` equal segments."""
    w = np.asarray(weights, dtype=float)
    n = vals.data.size // blocks
    out = ad.Var(w @ vals.data.reshape(blocks, n), (vals,))

    def backward(g):
        vals.grad += np.outer(w, g).ravel()

    out._backward = backward
    return out


def orbit_weighted_cross(ops: KernelOps, transform, U_scaled, Z: ad.Var, weights, log_ell, log_var) -> ad.Var:
    """Part cross-Gram sum_s w_s variance k0(U, scale(G^s Z)) in one sweep.

    `U_scaled` is the already-scaled first argument (shared across parts);
    `Z` is the raw inducing Var.  Transforms act on raw inputs, before the
    input map and lengthscale scaling.  All orbit powers go through a
    single backend cross-Gram call on the stacked rows.
    """
    W = orbit_rows_op(transform, Z)
    Vw = ops.scale_inputs(W, log_ell)
    K0 = ops.cross0(U_scaled, Vw)
    return ad.mul(ad.exp(log_var), block_weighted_sum(K0, weights, transform.orbit_size))


def orbit_pair_diag(ops: KernelOps, transform, X: np.ndarray, weights, log_ell, log_var) -> ad.Var:
    """Part diagonal k_t(x_i, x_i) = sum_s w_s k(x_i, G^s(x_i)) at raw data X."""
    X = np.asarray(X, dtype=float)
    S = transform.orbit_size
    G = np.concatenate([transform.apply_power_rows(X, s) for s in range(S)], axis=0)
    if np.iscomplexobj(G):
        raise ParameterError("training transforms must be real-valued")
    U = ops.scale_inputs(np.tile(X, (S, 1)), log_ell)
    V = ops.scale_inputs(G, log_ell)
    vals0 = ops.pair0(U, V)
    return ad.mul(ad.exp(log_var), block_weighted_sum_vec(vals0, weights, S))
