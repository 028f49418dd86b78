# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled cross-Gram kernels.

Pairwise inner products go through BLAS dgemm; the distance assembly and
shape function (exp / Matern profile) run in single fused passes over the
output buffer, which the C compiler vectorizes.  Inputs are pre-scaled by
their lengthscales, must be C-contiguous float64, and are assumed finite.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef void _dots(double[:, ::1] U, double[:, ::1] V, double[:, ::1] out) noexcept nogil:
    # out (n, m) row-major <- U @ V^T; in Fortran view out^T = V @ U^T.
    cdef int m = <int> V.shape[0], n = <int> U.shape[0], d = <int> U.shape[1]
    cdef double one = 1.0, zero = 0.0
    dgemm("T", "N", &m, &n, &d, &one, &V[0, 0], &d, &U[0, 0], &d, &zero, &out[0, 0], &m)


cdef void _matmul(double[:, ::1] A, double[:, ::1] B, double[:, ::1] out,
                  bint trans_a, double alpha) noexcept nogil:
    # out (r, c) row-major <- alpha * op(A) @ B with op(A) = A^T when trans_a.
    cdef int r = <int> out.shape[0], c = <int> out.shape[1]
    cdef int k = <int> (A.shape[0] if trans_a else A.shape[1])
    cdef int lda = <int> A.shape[1], ldb = <int> B.shape[1]
    cdef double zero = 0.0
    # Fortran view: out^T (c, r) = B^T (c, k) @ op(A)^T (k, r).
    dgemm("N", "T" if trans_a else "N", &c, &r, &k, &alpha,
          &B[0, 0], &ldb, &A[0, 0], &lda, &zero, &out[0, 0], &c)


cdef void _row_norms(double[:, ::1] X, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, k, n = X.shape[0], d = X.shape[1]
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(d):
            acc += X[i, k] * X[i, k]
        out[i] = acc


def rbf_cross(double[:, ::1] U, double[:, ::1] V):
    cdef Py_ssize_t n = U.shape[0], m = V.shape[0], d = U.shape[1]
    cdef Py_ssize_t i, j
    cdef double un, val
    if n == 0 or m == 0 or d == 0:
        return np.full((n, m), 1.0)
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    un_arr = np.empty(n, dtype=np.float64)
    vn_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] unv = un_arr, vn = vn_arr
    _row_norms(U, unv)
    _row_norms(V, vn)
    _dots(U, V, out)
    for i in range(n):
        un = unv[i]
        for j in range(m):
            val = un + vn[j] - 2.0 * out[i, j]
            if val < 0.0:
                val = 0.0
            out[i, j] = exp(-0.5 * val)
    return out_arr


def rbf_cross_backward(double[:, ::1] U, double[:, ::1] V,
                       double[:, ::1] E, double[:, ::1] dE):
    cdef Py_ssize_t n = U.shape[0], m = V.shape[0], d = U.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double w, rs
    if n == 0 or m == 0 or d == 0:
        return np.zeros((n, d)), np.zeros((m, d))
    # d/dD of exp(-D/2) is -E/2 and dD/du = 2 (u - v) cancel to
    # dU = rowsum(W) * U - W V and dV = colsum(W) * V - W^T U
    # with W = -E * dE.
    W_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] W = W_arr
    rs_arr = np.zeros(n, dtype=np.float64)
    cs_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] rsv = rs_arr, csv = cs_arr
    for i in range(n):
        rs = 0.0
        for j in range(m):
            w = -E[i, j] * dE[i, j]
            W[i, j] = w
            rs += w
            csv[j] += w
        rsv[i] = rs
    dU_arr = np.empty((n, d), dtype=np.float64)
    dV_arr = np.empty((m, d), dtype=np.float64)
    cdef double[:, ::1] dU = dU_arr, dV = dV_arr
    _matmul(W, V, dU, False, -1.0)
    _matmul(W, U, dV, True, -1.0)
    for i in range(n):
        rs = rsv[i]
        for k in range(d):
            dU[i, k] += rs * U[i, k]
    for j in range(m):
        rs = csv[j]
        for k in range(d):
            dV[j, k] += rs * V[j, k]
    return dU_arr, dV_arr


def matern32_cross(double[:, ::1] U, double[:, ::1] V):
    cdef Py_ssize_t n = U.shape[0], m = V.shape[0], d = U.shape[1]
    cdef Py_ssize_t i, j
    cdef double un, val, a
    if n == 0 or m == 0 or d == 0:
        return np.full((n, m), 1.0)
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    un_arr = np.empty(n, dtype=np.float64)
    vn_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] unv = un_arr, vn = vn_arr
    _row_norms(U, unv)
    _row_norms(V, vn)
    _dots(U, V, out)
    for i in range(n):
        un = unv[i]
        for j in range(m):
            val = un + vn[j] - 2.0 * out[i, j]
            if val < 0.0:
                val = 0.0
            a = sqrt(3.0 * val)
            out[i, j] = (1.0 + a) * exp(-a)
    return out_arr


def matern32_cross_backward(double[:, ::1] U, double[:, ::1] V,
                            double[:, ::1] dK):
    cdef Py_ssize_t n = U.shape[0], m = V.shape[0], d = U.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double un, val, w, rs
    if n == 0 or m == 0 or d == 0:
        return np.zeros((n, d)), np.zeros((m, d))
    # dK/dD = -1.5 exp(-sqrt(3 D)) is smooth at D = 0, so coincident points
    # contribute no spurious terms; same row/column-sum split as the RBF.
    W_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] W = W_arr
    un_arr = np.empty(n, dtype=np.float64)
    vn_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] unv = un_arr, vn = vn_arr
    _row_norms(U, unv)
    _row_norms(V, vn)
    _dots(U, V, W)
    rs_arr = np.zeros(n, dtype=np.float64)
    cs_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] rsv = rs_arr, csv = cs_arr
    for i in range(n):
        un = unv[i]
        rs = 0.0
        for j in range(m):
            val = un + vn[j] - 2.0 * W[i, j]
            if val < 0.0:
                val = 0.0
            w = -1.5 * exp(-sqrt(3.0 * val)) * dK[i, j]
            W[i, j] = w
            rs += w
            csv[j] += w
        rsv[i] = rs
    dU_arr = np.empty((n, d), dtype=np.float64)
    dV_arr = np.empty((m, d), dtype=np.float64)
    cdef double[:, ::1] dU = dU_arr, dV = dV_arr
    _matmul(W, V, dU, False, -2.0)
    _matmul(W, U, dV, True, -2.0)
    for i in range(n):
        rs = 2.0 * rsv[i]
        for k in range(d):
            dU[i, k] += rs * U[i, k]
    for j in range(m):
        rs = 2.0 * csv[j]
        for k in range(d):
            dV[j, k] += rs * V[j, k]
    return dU_arr, dV_arr
