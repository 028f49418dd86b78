"""Quantitative validators for the decomposition and model-quality claims.

Everything here is a pure, deterministic function producing plain data
(floats, lists, dicts) fit for JSON reports: Nystrom trace errors,
frequency-orthogonality residual suites, block-diagonality ratios for
optimal variational covariances, and the inter-domain cross-check that
recomputes part covariances from raw weighted orbit sums.

Eigenvalue checks run a Hermitian solver on probe Grams; probe sets
larger than 200 points are subsampled deterministically first.
"""

import numpy as np
from scipy.linalg import solve_triangular

from . import autodiff as ad
from . import gp
from . import hkd
from . import kernel_ops as kops
from . import kernels as kernels_mod
from . import training
from .errors import ParameterError, ShapeError
from .seeding import seed_stream

EIG_MAX_POINTS = 200


def _eig_probe_subset(X: np.ndarray) -> np.ndarray:
    if X.shape[0] <= EIG_MAX_POINTS:
        return X
    rng = seed_stream(0, "eig-subsample")
    idx = np.sort(rng.choice(X.shape[0], size=EIG_MAX_POINTS, replace=False))
    return X[idx]


def _hermitian_min_eig(G: np.ndarray) -> float:
    H = 0.5 * (G + G.conj().T)
    return float(np.min(np.linalg.eigvalsh(H)))


# ---------------------------------------------------------------------------
# Nystrom trace error


def _single_trace_error(diag_sum: float, Kuu, Kuf) -> float:
    L, _ = gp.jittered_cholesky(0.5 * (Kuu + Kuu.conj().T))
    A = solve_triangular(L, Kuf, lower=True)
    return diag_sum - float(np.sum(np.abs(A) ** 2))


def _inducing_list(parts, Z_or_groups):
    """Normalize the Z argument to one array per part."""
    if isinstance(Z_or_groups, np.ndarray):
        return [Z_or_groups] * len(parts)
    out = []
    for item in Z_or_groups:
        out.append(np.asarray(item.Z if hasattr(item, "Z") else item, dtype=float))
    if len(out) != len(parts):
        raise ShapeError(f"expected {len(parts)} inducing sets, got {len(out)}")
    return out


def nystrom_trace_error(parts_or_kernel, X, Z_or_groups) -> float:
    """tr(Kff - Kfu Kuu^{-1} Kuf), summed over parts for a decomposed model.

    `parts_or_kernel` is either a plain kernel (single term, `Z_or_groups`
    an m x d array) or a list of harmonic parts (`Z_or_groups` a shared
    array, or one array / inducing group per part).
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 1:
        raise ParameterError("trace error needs at least one data point")
    if isinstance(parts_or_kernel, kernels_mod.Kernel):
        Z = np.asarray(Z_or_groups, dtype=float)
        if Z.size == 0:
            raise ParameterError("inducing set must be nonempty")
        k = parts_or_kernel
        diag = float(np.real(kernels_mod.pair_vals(k, X, X)).sum())
        return _single_trace_error(
            diag, kernels_mod.gram(k, Z, Z), kernels_mod.gram(k, Z, X)
        )
    parts = list(parts_or_kernel)
    Zs = _inducing_list(parts, Z_or_groups)
    total = 0.0
    for part, Z in zip(parts, Zs):
        if Z.size == 0:
            raise ParameterError("inducing set must be nonempty")
        diag = float(np.real(part.pair_vals(X, X)).sum())
        total += _single_trace_error(diag, part.gram(Z, Z), part.gram(Z, X))
    return total


# ---------------------------------------------------------------------------
# orthogonality residual suite


def _flat_power_vectors(transform):
    """Per-factor power tuples for every flat orbit index, plus periods."""
    if hasattr(transform, "power_list"):
        return list(transform.power_list()), transform.periods
    return [(s,) for s in range(transform.period)], (transform.period,)


def _part_index_tuple(index) -> tuple:
    return index if isinstance(index, tuple) else (index,)


def _factors(transform):
    return transform.factors if hasattr(transform, "factors") else [transform]


def orthogonality_suite(base, g, X) -> dict:
    """Residual report for the frequency-part identities on probe inputs.

    Checks, over the complex parts of (base, g): the decomposition sum,
    part positive-semidefiniteness, the per-factor shift phase, orbit
    covariance phases, the double-orbit quadratic form for each part, and
    cross-frequency annihilation.  Raises if base is not invariant to g.
    """
    X = np.asarray(X, dtype=float)
    parts = hkd.complex_decomposition(base, g)  # verifies invariance
    Xe = _eig_probe_subset(X)
    X2 = np.roll(X, 1, axis=0)

    grams = hkd.part_grams(parts, Xe)
    decomp = float(
        np.max(np.abs(sum(grams) - kernels_mod.gram(base, Xe, Xe)))
    )
    min_eig = min(_hermitian_min_eig(G) for G in grams)
    part_max = [float(np.max(np.abs(G))) for G in grams]

    # shift phase, one generator application per factor
    shift = 0.0
    for j, factor in enumerate(_factors(g)):
        Xg = factor.apply_power_rows(X2, 1)
        for part in parts:
            t = _part_index_tuple(part.index)[j]
            phase = np.exp(2j * np.pi * t / factor.period)
            shift = max(
                shift,
                float(np.max(np.abs(part.pair_vals(X, Xg) - phase * part.pair_vals(X, X2)))),
            )

    # orbit covariance: values on the orbit of a single point are the
    # diagonal value times a frequency-dependent phase
    powers, periods = _flat_power_vectors(g)
    diag_stack = hkd.orbit_pair_stack(base, g, X)
    orbit_cov = 0.0
    for a in range(len(powers)):
        Xa = g.apply_power_rows(X, a)
        for b in range(len(powers)):
            stack_ab = hkd.orbit_pair_stack(base, g, Xa, g.apply_power_rows(X, b))
            delta = [
                (pa - pb) / Tj for pa, pb, Tj in zip(powers[a], powers[b], periods)
            ]
            for part in parts:
                t = _part_index_tuple(part.index)
                phase = np.exp(-2j * np.pi * sum(tj * dj for tj, dj in zip(t, delta)))
                vals = part.weights @ stack_ab
                ref = phase * (part.weights @ diag_stack)
                orbit_cov = max(orbit_cov, float(np.max(np.abs(vals - ref))))

    # double-orbit sums: M[a, b, i] = k(G^a x_i, G^b x'_i)
    n_flat = len(powers)
    M = np.empty((n_flat, n_flat, X.shape[0]), dtype=complex)
    for a in range(n_flat):
        Xa = g.apply_power_rows(X, a)
        for b in range(n_flat):
            M[a, b] = kernels_mod.pair_vals(base, Xa, g.apply_power_rows(X2, b))
    quad = 0.0
    cross = 0.0
    # part weights are the DFT coefficients, so conj(w) M w against the
    # double orbit reproduces the part values with no extra scaling
    for i, p1 in enumerate(parts):
        lhs = np.einsum("a,abi,b->i", np.conj(p1.weights), M, p1.weights)
        quad = max(quad, float(np.max(np.abs(lhs - p1.pair_vals(X, X2)))))
        for p2 in parts[i + 1 :]:
            val = np.einsum("a,abi,b->i", np.conj(p1.weights), M, p2.weights)
            cross = max(cross, float(np.max(np.abs(val))))

    return {
        "decomposition_residual": decomp,
        "min_part_eigenvalue": min_eig,
        "shift_residual": shift,
        "orbit_covariance_residual": orbit_cov,
        "quadratic_form_residual": quad,
        "cross_frequency_residual": cross,
        "part_max_abs": part_max,
    }


# ---------------------------------------------------------------------------
# block diagonality of the optimal variational covariance


def block_offdiag_ratio(S: np.ndarray, m: int) -> float:
    """Frobenius norm of off-diagonal m x m blocks over that of diagonal blocks."""
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError("S must be square")
    if m < 1 or S.shape[0] % m:
        raise ShapeError(f"dimension {S.shape[0]} is not divisible by block size {m}")
    T = S.shape[0] // m
    blocks = np.abs(S.reshape(T, m, T, m)) ** 2
    diag = sum(blocks[t, :, t, :].sum() for t in range(T))
    off = blocks.sum() - diag
    if diag == 0.0:
        raise ParameterError("diagonal blocks are all zero")
    return float(np.sqrt(off / diag))


def joint_sections(parts, Z, X):
    """Joint (Kuu, Kuf) over all parts' inducing variables.

    Cross-part prior covariances vanish (RKHS orthogonality), so Kuu is
    block diagonal in the parts while Kuf stacks the per-part cross
    sections against the data.
    """
    Zs = _inducing_list(parts, Z if isinstance(Z, np.ndarray) else list(Z))
    sizes = [Zt.shape[0] for Zt in Zs]
    total = sum(sizes)
    Kuu = np.zeros((total, total), dtype=complex)
    Kuf = np.zeros((total, X.shape[0]), dtype=complex)
    at = 0
    for part, Zt, sz in zip(parts, Zs, sizes):
        Kuu[at : at + sz, at : at + sz] = part.gram(Zt, Zt)
        Kuf[at : at + sz] = part.gram(Zt, X)
        at += sz
    if all(p.mode == "real" for p in parts):
        return Kuu.real, Kuf.real
    return Kuu, Kuf


def decoupling_ratio(kernel, transform, Z, X, noise_variance: float, mode="real") -> float:
    """block_offdiag_ratio of the optimal joint covariance for Gaussian noise.

    The likelihood precision is the closed-form I / noise_variance, which
    side-steps the posterior-dependent weights of the general statement.
    """
    if noise_variance <= 0:
        raise ParameterError("noise variance must be positive")
    builder = hkd.real_decomposition if mode == "real" else hkd.complex_decomposition
    parts = builder(kernel, transform)
    Z = np.asarray(Z, dtype=float)
    S = gp.optimal_S(*joint_sections(parts, Z, np.asarray(X, dtype=float)),
                     lam=1.0 / noise_variance)
    return block_offdiag_ratio(S, Z.shape[0])


# ---------------------------------------------------------------------------
# inter-domain cross-check


def inter_domain_check(base, g, Z, X) -> dict:
    """Compare part covariances against raw weighted orbit-sum functionals.

    Each frequency t defines functionals w_t over the orbit of an
    inducing point; their covariances with point evaluations and with
    each other are computed from plain base-kernel Grams on the stacked
    orbit and must reproduce the part values (same frequency) or vanish
    (different frequencies).
    """
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    parts = hkd.complex_decomposition(base, g)  # verifies invariance
    m = Z.shape[0]
    n_flat = g.orbit_size
    W = np.vstack([g.apply_power_rows(Z, s) for s in range(n_flat)])
    G_xw = kernels_mod.gram(base, X, W).reshape(X.shape[0], n_flat, m)
    G_ww = kernels_mod.gram(base, W, W).reshape(n_flat, m, n_flat, m)

    point = 0.0
    gram_res = 0.0
    cross = 0.0
    for i, p1 in enumerate(parts):
        direct = np.einsum("xsm,s->xm", G_xw, p1.weights)
        point = max(point, float(np.max(np.abs(direct - p1.gram(X, Z)))))
        for j, p2 in enumerate(parts):
            val = np.einsum("s,samb,m->ab", np.conj(p1.weights), G_ww, p2.weights)
            if i == j:
                gram_res = max(gram_res, float(np.max(np.abs(val - p1.gram(Z, Z)))))
            else:
                cross = max(cross, float(np.max(np.abs(val))))
    return {
        "point_residual": point,
        "gram_residual": gram_res,
        "cross_residual": cross,
    }


# ---------------------------------------------------------------------------
# inducing-point optimization against the trace error


def _trace_objective_var(ops, transform, weight_list, X, Z_vars, log_ell, log_var):
    """Tape scalar: summed per-part Nystrom trace errors at inducing Vars."""
    U = ops.scale_inputs(X, log_ell)
    total = None
    for weights, Zv in zip(weight_list, Z_vars):
        if transform is None:
            V = ops.scale_inputs(Zv, log_ell)
            Kuf = ad.transpose(ops.cross(U, V, log_var))
            Kuu = ops.cross(V, V, log_var)
            diag = ops.pair(U, U, log_var)
        else:
            Kuf = ad.transpose(
                kops.orbit_weighted_cross(ops, transform, U, Zv, weights, log_ell, log_var)
            )
            Vz = ops.scale_inputs(Zv, log_ell)
            Kuu = kops.orbit_weighted_cross(ops, transform, Vz, Zv, weights, log_ell, log_var)
            diag = kops.orbit_pair_diag(ops, transform, X, weights, log_ell, log_var)
        Kuu = ad.mul(ad.add(Kuu, ad.transpose(Kuu)), 0.5)
        L = gp.chol_with_jitter(Kuu)
        A = ad.solve_lower(L, Kuf)
        term = ad.add(ad.vsum(diag), ad.mul(ad.vsum(ad.square(A)), -1.0))
        total = term if total is None else ad.add(total, term)
    return total


def optimize_inducing_points(
    kernel,
    X,
    Z,
    transform=None,
    iterations: int = 150,
    learning_rate: float = 0.05,
):
    """Adam-minimize the (summed) trace error over inducing locations only.

    Kernel hyperparameters stay fixed.  `Z` is a single m x d array; for a
    decomposed model every real part starts from a copy of it.  Returns
    (list of optimized arrays — length 1 without a transform — and the
    objective value per iteration).
    """
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    ops = kops.KernelOps(
        kernel.kind, kernel.input_map, degree=kernel.degree, offset=kernel.offset
    )
    log_ell = ad.Var(np.log(kernel.lengthscales))
    log_var = ad.Var(np.log(np.array(kernel.variance)))
    if transform is None:
        weight_list = [None]
    else:
        weight_list = [p.weights.real for p in hkd.real_decomposition(kernel, transform)]
    Zs = {f"Z.{i}": Z.copy() for i in range(len(weight_list))}
    state = training.AdamState.init(Zs)
    history = []
    for _ in range(iterations):
        Z_vars = [ad.Var(Zs[f"Z.{i}"]) for i in range(len(weight_list))]
        obj = _trace_objective_var(ops, transform, weight_list, X, Z_vars, log_ell, log_var)
        obj.backward()
        history.append(float(obj.data))
        grads = {f"Z.{i}": Z_vars[i].grad for i in range(len(weight_list))}
        state, Zs = training.adam_step(state, Zs, grads, learning_rate)
    return [Zs[f"Z.{i}"] for i in range(len(weight_list))], history
