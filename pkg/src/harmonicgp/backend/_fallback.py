"""Pure-numpy implementations of the cross-Gram kernels.

Semantics mirror the compiled core exactly; summation order may differ at
the level of floating-point rounding.  Inputs are pre-scaled by their
lengthscales, so these routines only see unit-lengthscale geometry.
"""

import numpy as np

NAME = "numpy"
_SQRT3 = np.sqrt(3.0)


def _sqdist(U, V):
    uu = np.einsum("ij,ij->i", U, U)
    vv = np.einsum("ij,ij->i", V, V)
    D = uu[:, None] + vv[None, :] - 2.0 * (U @ V.T)
    np.maximum(D, 0.0, out=D)
    return D


def rbf_cross(U, V):
    """exp(-0.5 * ||u_i - v_j||^2) for all pairs."""
    D = _sqdist(U, V)
    D *= -0.5
    return np.exp(D, out=D)


def rbf_cross_backward(U, V, E, dE):
    """Gradients of sum(dE * rbf_cross(U, V)) w.r.t. U and V."""
    dD = -0.5 * E * dE
    dU = 2.0 * (dD.sum(axis=1)[:, None] * U - dD @ V)
    dV = 2.0 * (dD.sum(axis=0)[:, None] * V - dD.T @ U)
    return dU, dV


def matern32_cross(U, V):
    """(1 + sqrt(3) r) exp(-sqrt(3) r) with r = ||u_i - v_j||."""
    A = np.sqrt(3.0 * _sqdist(U, V))
    return (1.0 + A) * np.exp(-A)


def matern32_cross_backward(U, V, dK):
    """Gradients of sum(dK * matern32_cross(U, V)) w.r.t. U and V.

    dK/dD = -1.5 exp(-sqrt(3 D)) is smooth at D = 0, so coincident points
    contribute no spurious terms.
    """
    A = np.sqrt(3.0 * _sqdist(U, V))
    dD = -1.5 * np.exp(-A) * dK
    dU = 2.0 * (dD.sum(axis=1)[:, None] * U - dD @ V)
    dV = 2.0 * (dD.sum(axis=0)[:, None] * V - dD.T @ U)
    return dU, dV
