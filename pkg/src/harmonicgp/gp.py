"""Variational Gaussian process models built on harmonic kernel parts.

The decomposed model places one independent inducing group per real
frequency part: group t carries its own inducing inputs Z_t, variational
mean mu_t, and covariance factor L_t.  Because parts are orthogonal as
covariance functions, the prior over the stacked inducing variables is
block diagonal, the KL term separates into per-part terms, and the
predictive density decomposes into per-part means and variance
contributions.  A plain (undecomposed) sparse variational model is the
single-group special case and shares all of the machinery.

Two evaluation paths are kept deliberately separate and pinned against
each other by tests: predictions and diagnostics run in plain numpy via
the reference kernel layer, while the evidence lower bound and its exact
gradients run on the reverse-mode tape through the compiled cross-Gram
backend.

Conventions: hyperparameters are trained in log space; covariance factor
diagonals go through a softplus so every parameter is unconstrained; the
variational posterior is initialized at the prior (mu = 0, S = Kuu),
which makes the initial KL terms vanish.  Cholesky factorizations are
attempted without jitter first; on failure a jitter of 1e-8 times the
mean diagonal is added, escalating tenfold up to 1e-4 before giving up.
"""

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import log_ndtr as _np_log_ndtr

from . import autodiff as ad
from . import hkd
from . import kernel_ops as kops
from . import kernels as kernels_mod
from . import transforms as transforms_mod
from .errors import NumericalError, ParameterError, ShapeError
from .seeding import seed_stream

JITTER_START = 1e-8
JITTER_MAX = 1e-4
CHECKPOINT_VERSION = 1

_LOG_2PI = np.log(2.0 * np.pi)
_GH_POINTS = 20
_gh_x, _gh_w = np.polynomial.hermite.hermgauss(_GH_POINTS)


# ---------------------------------------------------------------------------
# numerics helpers


def _jitter_ladder(K: np.ndarray):
    """Yield the jitter magnitudes to try: none, then 1e-8 to 1e-4 of the
    mean diagonal in factors of ten."""
    scale = max(float(np.mean(np.real(np.diag(K)))), 1e-12)
    yield 0.0
    eps = JITTER_START * scale
    while eps <= JITTER_MAX * scale * (1.0 + 1e-12):
        yield eps
        eps *= 10.0


def jittered_cholesky(K: np.ndarray):
    """Lower Cholesky of K + eps I with the escalating jitter policy.

    Returns (L, eps).  The plain factorization is attempted first so that
    exact algebraic identities are untouched for well-conditioned inputs;
    on failure eps starts at 1e-8 times the mean diagonal and escalates
    tenfold up to 1e-4 times the mean diagonal before NumericalError.
    """
    K = np.asarray(K)
    eye = np.eye(K.shape[0], dtype=K.dtype)
    for eps in _jitter_ladder(K):
        try:
            return np.linalg.cholesky(K + eps * eye if eps else K), eps
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"Cholesky failed up to jitter {JITTER_MAX:.0e} times the mean diagonal"
    )


def chol_with_jitter(K: ad.Var) -> ad.Var:
    """Tape Cholesky with the same policy; the jitter is a detached constant."""
    eye = np.eye(K.data.shape[0])
    for eps in _jitter_ladder(K.data):
        try:
            np.linalg.cholesky(K.data + eps * eye if eps else K.data)
        except np.linalg.LinAlgError:
            continue
        return ad.cholesky(ad.add(K, eps * eye) if eps else K)
    raise NumericalError("Cholesky failed along the jitter escalation ladder")


def kl_gaussian(mu: np.ndarray, S: np.ndarray, Kuu: np.ndarray) -> float:
    """KL( N(mu, S) || N(0, Kuu) ) via Cholesky factorizations."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    m = mu.size
    L, _ = jittered_cholesky(np.asarray(Kuu, dtype=float))
    Ls, _ = jittered_cholesky(np.asarray(S, dtype=float))
    A = solve_triangular(L, Ls, lower=True)
    a = solve_triangular(L, mu, lower=True)
    logdet_k = 2.0 * np.sum(np.log(np.diag(L)))
    logdet_s = 2.0 * np.sum(np.log(np.diag(Ls)))
    return 0.5 * float(np.sum(A * A) + a @ a - m + logdet_k - logdet_s)


def optimal_S(Kuu: np.ndarray, Kuf: np.ndarray, lam) -> np.ndarray:
    """Optimal variational covariance Kuu (Kuu + Kuf Lam Kfu)^{-1} Kuu.

    `lam` is the likelihood precision: a scalar or a per-datum vector
    (1/noise_variance for a Gaussian likelihood).  Hermitian complex
    blocks are supported; real input gives real output.
    """
    Kuu = np.asarray(Kuu)
    Kuf = np.asarray(Kuf)
    lam = np.asarray(lam, dtype=float)
    scaled = Kuf * (lam if lam.ndim else lam[()])
    M = Kuu + scaled @ Kuf.conj().T
    L, _ = jittered_cholesky(M)
    S = Kuu @ cho_solve((L, True), Kuu)
    return 0.5 * (S + S.conj().T)


# ---------------------------------------------------------------------------
# likelihoods


class GaussianLikelihood:
    """Homoskedastic Gaussian observation noise, variance trained in log space."""

    kind = "gaussian"

    def __init__(self, noise_variance: float = 0.1):
        if noise_variance <= 0:
            raise ParameterError("noise variance must be positive")
        self.noise_variance = float(noise_variance)

    def expected_log_prob_var(self, y, mean: ad.Var, var: ad.Var, log_noise: ad.Var) -> ad.Var:
        """Tape E_q[log p(y | f)] per point for f ~ N(mean, var), closed form."""
        y = np.asarray(y, dtype=float).reshape(-1)
        inv_noise = ad.exp(ad.mul(log_noise, -1.0))
        resid = ad.add(y, ad.mul(mean, -1.0))
        quad = ad.mul(ad.add(ad.square(resid), var), ad.mul(inv_noise, 0.5))
        const = ad.add(ad.mul(log_noise, 0.5), 0.5 * _LOG_2PI)
        return ad.mul(ad.add(quad, const), -1.0)

    def log_pred_density(self, y, mean, var) -> np.ndarray:
        """log N(y; mean, var + noise) per point (numpy)."""
        total = var + self.noise_variance
        return -0.5 * (_LOG_2PI + np.log(total) + (y - mean) ** 2 / total)

    def predict_y(self, mean, var):
        return mean, var + self.noise_variance

    def descriptor(self):
        return {"kind": self.kind, "noise_variance": self.noise_variance}


def binary_labels(y) -> np.ndarray:
    """Coerce binary labels to the {-1, +1} convention.

    Accepts either encoding: {0, 1} maps to {-1, +1}; {-1, +1} passes
    through.  Anything else is rejected.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if np.all(np.isin(y, (-1.0, 1.0))):
        return y
    if np.all(np.isin(y, (0.0, 1.0))):
        return 2.0 * y - 1.0
    raise ParameterError("binary labels must be in {0, 1} or {-1, +1}")


class BernoulliLikelihood:
    """Probit Bernoulli likelihood on labels in {-1, +1}.

    Labels in {0, 1} are accepted and mapped.  Expectations of the log
    likelihood use 20-node Gauss-Hermite quadrature; the predictive class
    probability has the closed probit form Phi(mean / sqrt(1 + var)).
    """

    kind = "bernoulli"

    def expected_log_prob_var(self, y, mean: ad.Var, var: ad.Var, log_noise=None) -> ad.Var:
        y = binary_labels(y)
        B = y.size
        mcol = ad.reshape(mean, (B, 1))
        sig = ad.sqrt(ad.mul(ad.maximum_const(var, 1e-300), 2.0))
        scol = ad.reshape(sig, (B, 1))
        nodes = _gh_x[None, :]
        F = ad.add(mcol, ad.mul(scol, nodes))
        Zc = ad.mul(F, y[:, None])
        logphi = ad.log_ndtr(Zc)
        weighted = ad.vsum(ad.mul(logphi, _gh_w[None, :]), axis=1)
        return ad.mul(weighted, 1.0 / np.sqrt(np.pi))

    def log_pred_density(self, y, mean, var) -> np.ndarray:
        z = binary_labels(y) * mean / np.sqrt(1.0 + var)
        return _np_log_ndtr(z)

    def predict_proba(self, mean, var) -> np.ndarray:
        return np.exp(_np_log_ndtr(mean / np.sqrt(1.0 + var)))

    def descriptor(self):
        return {"kind": self.kind}


def likelihood_from_descriptor(desc: dict):
    if desc["kind"] == "gaussian":
        return GaussianLikelihood(desc["noise_variance"])
    if desc["kind"] == "bernoulli":
        return BernoulliLikelihood()
    raise ParameterError(f"unknown likelihood kind {desc['kind']!r}")


# ---------------------------------------------------------------------------
# inducing groups and models


@dataclass
class InducingGroup:
    """Variational parameters of one frequency part.

    The covariance factor is stored unconstrained: strict lower entries
    row-major in `L_strict`, diagonal as softplus pre-images in
    `L_diag_raw`.
    """

    Z: np.ndarray
    mu: np.ndarray
    L_strict: np.ndarray
    L_diag_raw: np.ndarray

    @property
    def m(self) -> int:
        return self.mu.size

    @property
    def L(self) -> np.ndarray:
        m = self.m
        M = np.zeros((m, m))
        M[np.tril_indices(m, k=-1)] = self.L_strict
        M[np.diag_indices(m)] = np.log1p(np.exp(-np.abs(self.L_diag_raw))) + np.maximum(
            self.L_diag_raw, 0.0
        )
        return M

    @property
    def S(self) -> np.ndarray:
        L = self.L
        return L @ L.T

    @staticmethod
    def from_chol(Z: np.ndarray, mu: np.ndarray, L: np.ndarray) -> "InducingGroup":
        Z = np.array(Z, dtype=float)
        mu = np.array(mu, dtype=float).reshape(-1)
        L = np.asarray(L, dtype=float)
        m = mu.size
        if L.shape != (m, m) or Z.shape[0] != m:
            raise ShapeError("inconsistent inducing group shapes")
        diag = np.diag(L)
        if np.any(diag <= 0):
            raise ParameterError("Cholesky diagonal must be positive")
        return InducingGroup(
            Z=Z,
            mu=mu,
            L_strict=L[np.tril_indices(m, k=-1)].copy(),
            L_diag_raw=ad.softplus_inverse(diag),
        )


class _ModelBase:
    """Shared storage for kernel structure and log-space hyperparameters."""

    def __init__(self, kernel: kernels_mod.Kernel, likelihood):
        if kernel.kind not in ("rbf", "matern32", "polynomial"):
            raise ParameterError(f"kernel kind {kernel.kind!r} is not trainable")
        self.kernel_kind = kernel.kind
        self.input_map = kernel.input_map
        self.degree = kernel.degree
        self.offset = kernel.offset
        self.log_lengthscales = np.array(np.log(np.asarray(kernel.lengthscales, dtype=float)))
        self.log_variance = np.array(np.log(kernel.variance))
        self.likelihood = likelihood
        if likelihood.kind == "gaussian":
            self.log_noise = np.array(np.log(likelihood.noise_variance))

    def current_kernel(self) -> kernels_mod.Kernel:
        return kernels_mod.Kernel(
            self.kernel_kind,
            lengthscales=np.exp(self.log_lengthscales),
            variance=float(np.exp(self.log_variance)),
            degree=self.degree,
            offset=self.offset,
            input_map=self.input_map,
        )

    def current_likelihood(self):
        if self.likelihood.kind == "gaussian":
            return GaussianLikelihood(float(np.exp(self.log_noise)))
        return self.likelihood

    def _ops(self) -> kops.KernelOps:
        return kops.KernelOps(self.kernel_kind, self.input_map, self.degree, self.offset)

    def clone(self):
        return copy.deepcopy(self)


class SvgpModel(_ModelBase):
    """Sparse variational GP with one inducing group on the base kernel."""

    model_type = "svgp"

    def __init__(self, kernel, likelihood, group: InducingGroup):
        super().__init__(kernel, likelihood)
        self.group = group

    @property
    def groups(self):
        return [self.group]

    @property
    def num_inducing(self) -> int:
        return self.group.m


class HvgpModel(_ModelBase):
    """Variational GP with one independent inducing group per real part."""

    model_type = "hvgp"

    def __init__(self, kernel, transform, likelihood, groups, part_indices, part_weights):
        super().__init__(kernel, likelihood)
        self.transform = transform
        self.groups = list(groups)
        self.part_indices = list(part_indices)
        self.part_weights = [np.asarray(w, dtype=float) for w in part_weights]
        if len(self.groups) != len(self.part_weights):
            raise ShapeError("one inducing group per part is required")

    @property
    def num_parts(self) -> int:
        return len(self.part_weights)

    @property
    def num_inducing(self) -> int:
        return sum(g.m for g in self.groups)

    def parts(self):
        """Materialize HarmonicPart objects with the current hyperparameters."""
        k = self.current_kernel()
        return [
            hkd.HarmonicPart(k, self.transform, idx, "real", w)
            for idx, w in zip(self.part_indices, self.part_weights)
        ]


def build_svgp(kernel, likelihood, Z) -> SvgpModel:
    """Initialize a plain sparse model: mu = 0, S = Kuu at the given Z."""
    Z = np.array(Z, dtype=float)
    Kuu = np.real(kernels_mod.gram(kernel, Z))
    L, _ = jittered_cholesky(Kuu)
    group = InducingGroup.from_chol(Z, np.zeros(Z.shape[0]), L)
    return SvgpModel(kernel, likelihood, group)


def build_hvgp(kernel, transform, likelihood, Z, verify: bool = True, seed: int = 0) -> HvgpModel:
    """Initialize the decomposed model with mu_t = 0 and S_t = K_t(Z_t, Z_t).

    `Z` is either one (m, d) array shared as the initial location of every
    group or a list with one array per part.  Kernel invariance under the
    transform is verified at construction unless `verify` is False.
    """
    parts = hkd.real_decomposition(kernel, transform, verify=verify, seed=seed)
    if isinstance(Z, np.ndarray) and Z.ndim == 2:
        Z_list = [Z.copy() for _ in parts]
    else:
        Z_list = [np.array(z, dtype=float) for z in Z]
    if len(Z_list) != len(parts):
        raise ShapeError(f"expected {len(parts)} inducing arrays, got {len(Z_list)}")
    groups = []
    for part, Zt in zip(parts, Z_list):
        Kuu = np.real(part.gram(Zt))
        L, _ = jittered_cholesky(0.5 * (Kuu + Kuu.T))
        groups.append(InducingGroup.from_chol(Zt, np.zeros(Zt.shape[0]), L))
    return HvgpModel(
        kernel,
        transform,
        likelihood,
        groups,
        [p.index for p in parts],
        [p.weights for p in parts],
    )


# ---------------------------------------------------------------------------
# parameter plumbing


def params(model) -> dict:
    """Live references to every trainable array, keyed by dotted names."""
    out = {
        "log_lengthscales": model.log_lengthscales,
        "log_variance": model.log_variance,
    }
    if model.likelihood.kind == "gaussian":
        out["log_noise"] = model.log_noise
    for i, g in enumerate(model.groups):
        out[f"groups.{i}.Z"] = g.Z
        out[f"groups.{i}.mu"] = g.mu
        out[f"groups.{i}.L_strict"] = g.L_strict
        out[f"groups.{i}.L_diag_raw"] = g.L_diag_raw
    return out


def set_params(model, values: dict) -> None:
    """Copy new values into the model's parameter arrays in place."""
    live = params(model)
    for name, val in values.items():
        if name not in live:
            raise ParameterError(f"unknown parameter {name!r}")
        live[name][...] = val


def flatten_params(pdict: dict):
    """Pack a name->array dict into (vector, spec) for optimizers."""
    names = sorted(pdict)
    vec = np.concatenate([np.asarray(pdict[n], dtype=float).ravel() for n in names])
    spec = [(n, pdict[n].shape, np.asarray(pdict[n]).size) for n in names]
    return vec, spec


def unflatten_params(vec: np.ndarray, spec) -> dict:
    out = {}
    at = 0
    for name, shape, size in spec:
        out[name] = np.asarray(vec[at : at + size], dtype=float).reshape(shape)
        at += size
    return out


# ---------------------------------------------------------------------------
# the evidence lower bound on the tape


def _group_leaves(model):
    """Tape leaves for every parameter, mirroring params() keys."""
    leaves = {
        "log_lengthscales": ad.Var(model.log_lengthscales),
        "log_variance": ad.Var(model.log_variance),
    }
    if model.likelihood.kind == "gaussian":
        leaves["log_noise"] = ad.Var(model.log_noise)
    for i, g in enumerate(model.groups):
        leaves[f"groups.{i}.Z"] = ad.Var(g.Z)
        leaves[f"groups.{i}.mu"] = ad.Var(g.mu)
        leaves[f"groups.{i}.L_strict"] = ad.Var(g.L_strict)
        leaves[f"groups.{i}.L_diag_raw"] = ad.Var(g.L_diag_raw)
    return leaves


def _part_terms(ops, transform, weights, Xb, U, leaves, gi):
    """Predictive moments and KL of one inducing group on the tape.

    Returns (mean, var_contribution, kl) where the variance contribution
    is k_t(x, x) - diag(Q_t) + diag(K_t,fu Kuu_t^{-1} S_t Kuu_t^{-1} K_t,uf).
    """
    log_ell = leaves["log_lengthscales"]
    log_var = leaves["log_variance"]
    Zv = leaves[f"groups.{gi}.Z"]
    muv = leaves[f"groups.{gi}.mu"]
    Ls = ad.fill_lower(leaves[f"groups.{gi}.L_strict"], ad.softplus(leaves[f"groups.{gi}.L_diag_raw"]))

    if transform is None:
        Vz = ops.scale_inputs(Zv, log_ell)
        Kfu = ops.cross(U, Vz, log_var)
        Kuu = ops.cross(Vz, Vz, log_var)
        prior_diag = ops.pair(U, U, log_var)
    else:
        Kfu = kops.orbit_weighted_cross(ops, transform, U, Zv, weights, log_ell, log_var)
        Vz = ops.scale_inputs(Zv, log_ell)
        Kuu = kops.orbit_weighted_cross(ops, transform, Vz, Zv, weights, log_ell, log_var)
        prior_diag = kops.orbit_pair_diag(ops, transform, Xb, weights, log_ell, log_var)

    Kuu = ad.mul(ad.add(Kuu, ad.transpose(Kuu)), 0.5)
    L = chol_with_jitter(Kuu)
    A = ad.solve_lower(L, ad.transpose(Kfu))
    a = ad.solve_lower(L, muv)
    mean = ad.matvec(ad.transpose(A), a)
    qdiag = ad.vsum(ad.square(A), axis=0)
    C = ad.solve_lower(L, A, transposed=True)
    D = ad.matmul(ad.transpose(Ls), C)
    sdiag = ad.vsum(ad.square(D), axis=0)
    var_t = ad.add(ad.add(prior_diag, ad.mul(qdiag, -1.0)), sdiag)

    m = muv.data.size
    trace = ad.vsum(ad.square(ad.solve_lower(L, Ls)))
    quad = ad.vsum(ad.square(a))
    logdet_k = ad.mul(ad.vsum(ad.log(ad.diag_part(L))), 2.0)
    logdet_s = ad.mul(ad.vsum(ad.log(ad.diag_part(Ls))), 2.0)
    kl = ad.mul(
        ad.add(ad.add(trace, quad), ad.add(ad.add(logdet_k, ad.mul(logdet_s, -1.0)), -float(m))),
        0.5,
    )
    return mean, var_t, kl


def _elbo_var(model, X, y, data_size: int):
    """Build the bound as a tape scalar; returns (elbo_var, leaves)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError("X must be (B, d) with one label per row")
    B = y.size
    if B < 1:
        raise ShapeError("need at least one data point")
    leaves = _group_leaves(model)
    ops = model._ops()
    U = ops.scale_inputs(X, leaves["log_lengthscales"])

    if model.model_type == "svgp":
        mean, var, kl = _part_terms(ops, None, None, X, U, leaves, 0)
        kl_total = kl
    else:
        means, var_parts, kls = [], [], []
        for gi, w in enumerate(model.part_weights):
            mean_t, var_t, kl_t = _part_terms(ops, model.transform, w, X, U, leaves, gi)
            means.append(mean_t)
            var_parts.append(var_t)
            kls.append(kl_t)
        mean = means[0]
        var = var_parts[0]
        for t in range(1, len(means)):
            mean = ad.add(mean, means[t])
            var = ad.add(var, var_parts[t])
        kl_total = kls[0]
        for t in range(1, len(kls)):
            kl_total = ad.add(kl_total, kls[t])

    log_noise = leaves.get("log_noise")
    ell = model.likelihood.expected_log_prob_var(y, mean, var, log_noise)
    fit = ad.mul(ad.vsum(ell), float(data_size) / B)
    bound = ad.add(fit, ad.mul(kl_total, -1.0))
    return bound, leaves


def elbo(model, X, y, data_size: int | None = None) -> float:
    """Minibatch evidence lower bound, scaled to the full dataset size."""
    data_size = len(np.asarray(y).reshape(-1)) if data_size is None else int(data_size)
    bound, _ = _elbo_var(model, X, y, data_size)
    return float(bound.data)

def elbo_grad(model, X, y, data_size: int | None = None):
    """The bound and its exact gradients for every parameter.

    Returns (value, grads) with grads keyed like params(model).
    """
    data_size = len(np.asarray(y).reshape(-1)) if data_size is None else int(data_size)
    bound, leaves = _elbo_var(model, X, y, data_size)
    bound.backward()
    grads = {name: leaf.grad for name, leaf in leaves.items()}
    return float(bound.data), grads


# ---------------------------------------------------------------------------
# numpy predictive path


def _real_part_gram(kernel, transform, weights, X, X2=None) -> np.ndarray:
    stack = hkd.orbit_gram_stack(kernel, transform, X, X2)
    return np.real(np.tensordot(weights, stack, axes=(0, 0)))


def _real_part_diag(kernel, transform, weights, X) -> np.ndarray:
    stack = hkd.orbit_pair_stack(kernel, transform, X)
    return np.real(np.tensordot(weights, stack, axes=(0, 0)))


def _group_predict(kernel, transform, weights, group: InducingGroup, Xstar):
    """Per-part predictive pieces in numpy: (mean_t, qdiag_t, sdiag_t, prior_t)."""
    if transform is None:
        Kuu = np.real(kernels_mod.gram(kernel, group.Z))
        Kfu = np.real(kernels_mod.gram(kernel, Xstar, group.Z))
        prior = np.real(kernels_mod.pair_vals(kernel, Xstar, Xstar))
    else:
        Kuu = _real_part_gram(kernel, transform, weights, group.Z)
        Kfu = _real_part_gram(kernel, transform, weights, Xstar, group.Z)
        prior = _real_part_diag(kernel, transform, weights, Xstar)
    L, _ = jittered_cholesky(0.5 * (Kuu + Kuu.T))
    A = solve_triangular(L, Kfu.T, lower=True)
    a = solve_triangular(L, group.mu, lower=True)
    mean_t = A.T @ a
    qdiag = np.einsum("ij,ij->j", A, A)
    C = solve_triangular(L, A, lower=True, trans=1)
    D = group.L.T @ C
    sdiag = np.einsum("ij,ij->j", D, D)
    return mean_t, qdiag, sdiag, prior


def svgp_predict(model: SvgpModel, Xstar):
    """Latent predictive mean and variance at Xstar."""
    Xstar = np.asarray(Xstar, dtype=float)
    kernel = model.current_kernel()
    mean, qdiag, sdiag, prior = _group_predict(kernel, None, None, model.group, Xstar)
    return mean, prior - qdiag + sdiag


def hvgp_predict(model: HvgpModel, Xstar, breakdown: bool = False, threads: int = 1):
    """Latent predictive moments, summed over parts.

    With `breakdown=True` returns (mean, var, detail) where detail carries
    per-part means and variance contributions that sum to the totals.
    Per-part work can be spread over `threads` workers; results are
    combined in fixed part order.
    """
    Xstar = np.asarray(Xstar, dtype=float)
    kernel = model.current_kernel()

    def one(gi):
        return _group_predict(
            kernel, model.transform, model.part_weights[gi], model.groups[gi], Xstar
        )

    indices = range(model.num_parts)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, indices))
    else:
        results = [one(gi) for gi in indices]

    mean = np.zeros(Xstar.shape[0])
    var = np.zeros(Xstar.shape[0])
    detail = {"part_index": [], "mean": [], "var": []}
    for gi, (mean_t, qdiag, sdiag, prior) in zip(indices, results):
        var_t = prior - qdiag + sdiag
        mean += mean_t
        var += var_t
        detail["part_index"].append(model.part_indices[gi])
        detail["mean"].append(mean_t)
        detail["var"].append(var_t)
    if breakdown:
        return mean, var, detail
    return mean, var


def predict(model, Xstar, breakdown: bool = False, threads: int = 1):
    if model.model_type == "svgp":
        return svgp_predict(model, Xstar)
    return hvgp_predict(model, Xstar, breakdown=breakdown, threads=threads)


def hvgp_joint_predict(model: HvgpModel, Xstar, mu_joint, S_joint):
    """Predictive moments under a jointly correlated q over stacked groups.

    mu_joint stacks the per-part means; S_joint is the full covariance
    over the stacked inducing variables (parts in model order).  With a
    block-diagonal S_joint this reduces to hvgp_predict.
    """
    Xstar = np.asarray(Xstar, dtype=float)
    kernel = model.current_kernel()
    mu_joint = np.asarray(mu_joint, dtype=float).reshape(-1)
    S_joint = np.asarray(S_joint, dtype=float)
    sizes = [g.m for g in model.groups]
    total = sum(sizes)
    if mu_joint.size != total or S_joint.shape != (total, total):
        raise ShapeError("joint moments must cover all stacked inducing variables")

    C_rows = []
    qdiag_sum = np.zeros(Xstar.shape[0])
    prior = None
    for gi, g in enumerate(model.groups):
        w = model.part_weights[gi]
        Kuu = _real_part_gram(kernel, model.transform, w, g.Z)
        Kfu = _real_part_gram(kernel, model.transform, w, Xstar, g.Z)
        L, _ = jittered_cholesky(0.5 * (Kuu + Kuu.T))
        A = solve_triangular(L, Kfu.T, lower=True)
        qdiag_sum += np.einsum("ij,ij->j", A, A)
        C_rows.append(solve_triangular(L, A, lower=True, trans=1))
        if prior is None:
            prior = np.real(kernels_mod.pair_vals(kernel, Xstar, Xstar))
    C = np.vstack(C_rows)
    mean = C.T @ mu_joint
    W = S_joint @ C
    svar = np.einsum("ij,ij->j", C, W)
    return mean, prior - qdiag_sum + svar


def build_orbit_svgp(model: HvgpModel, mu_joint=None, S_joint=None) -> SvgpModel:
    """Map a period-2 decomposed model to its equivalent orbit-inducing model.

    For T = 2 the frequency variables relate to function values on the
    orbit [Z; G(Z)] by v_0 = u_0 + u_1, v_1 = u_0 - u_1 (the inverse DFT
    with T F^H real).  Pushing the joint variational moments through that
    map yields a plain sparse model over the orbit points whose predictive
    density matches the joint decomposed model exactly.

    Requires both groups to share the same Z.  Defaults to the model's own
    (block-diagonal) joint moments.
    """
    if model.model_type != "hvgp" or model.num_parts != 2:
        raise ParameterError("orbit construction is defined for T = 2 (two parts)")
    if isinstance(model.transform, transforms_mod.MultiWayTransform):
        raise ParameterError("orbit construction needs a single two-cyclic factor")
    if model.transform.period != 2:
        raise ParameterError("orbit construction is defined for period-2 transforms")
    Z0, Z1 = model.groups[0].Z, model.groups[1].Z
    if Z0.shape != Z1.shape or not np.allclose(Z0, Z1, atol=1e-12):
        raise ParameterError("orbit construction requires shared inducing inputs")
    m = model.groups[0].m
    if mu_joint is None:
        mu_joint = np.concatenate([model.groups[0].mu, model.groups[1].mu])
    if S_joint is None:
        S_joint = np.zeros((2 * m, 2 * m))
        S_joint[:m, :m] = model.groups[0].S
        S_joint[m:, m:] = model.groups[1].S
    mu_joint = np.asarray(mu_joint, dtype=float).reshape(2 * m)
    S_joint = np.asarray(S_joint, dtype=float)

    A = np.zeros((2 * m, 2 * m))
    eye = np.eye(m)
    A[:m, :m] = eye
    A[:m, m:] = eye
    A[m:, :m] = eye
    A[m:, m:] = -eye
    mu_v = A @ mu_joint
    S_v = A @ S_joint @ A.T
    W = np.vstack([Z0, model.transform.apply(Z0, 1)])
    try:
        L_v = np.linalg.cholesky(0.5 * (S_v + S_v.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("mapped covariance is not positive definite") from exc
    group = InducingGroup.from_chol(W, mu_v, L_v)
    return SvgpModel(model.current_kernel(), model.current_likelihood(), group)


# ---------------------------------------------------------------------------
# exact reference posterior


def exact_gp_posterior(kernel, X, y, noise_variance: float, Xstar):
    """Exact GP regression posterior moments at Xstar."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    Xstar = np.asarray(Xstar, dtype=float)
    Kff = np.real(kernels_mod.gram(kernel, X)) + noise_variance * np.eye(X.shape[0])
    try:
        L = np.linalg.cholesky(Kff)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("exact posterior: covariance not positive definite") from exc
    Kfs = np.real(kernels_mod.gram(kernel, X, Xstar))
    alpha = cho_solve((L, True), y)
    mean = Kfs.T @ alpha
    V = solve_triangular(L, Kfs, lower=True)
    prior = np.real(kernels_mod.pair_vals(kernel, Xstar, Xstar))
    var = prior - np.einsum("ij,ij->j", V, V)
    return mean, var


def log_evidence(kernel, X, y, noise_variance: float) -> float:
    """Exact Gaussian log marginal likelihood log N(y; 0, Kff + noise I)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    Kff = np.real(kernels_mod.gram(kernel, X)) + noise_variance * np.eye(X.shape[0])
    try:
        L = np.linalg.cholesky(Kff)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("log evidence: covariance not positive definite") from exc
    alpha = cho_solve((L, True), y)
    return float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * y.size * _LOG_2PI
    )


# ---------------------------------------------------------------------------
# checkpoints


def to_checkpoint(model) -> dict:
    """JSON-ready snapshot of the full model state."""
    kernel = model.current_kernel()
    out = {
        "format_version": CHECKPOINT_VERSION,
        "model_type": model.model_type,
        "kernel": kernel.descriptor(),
        "likelihood": model.current_likelihood().descriptor(),
        "groups": [
            {
                "Z": g.Z.tolist(),
                "mu": g.mu.tolist(),
                "L_strict": g.L_strict.tolist(),
                "L_diag_raw": g.L_diag_raw.tolist(),
            }
            for g in model.groups
        ],
    }
    if model.model_type == "hvgp":
        out["transform"] = model.transform.descriptor()
        out["part_indices"] = [
            list(idx) if isinstance(idx, tuple) else idx for idx in model.part_indices
        ]
        out["part_weights"] = [w.tolist() for w in model.part_weights]
    return out


def _group_from_dict(d) -> InducingGroup:
    return InducingGroup(
        Z=np.asarray(d["Z"], dtype=float),
        mu=np.asarray(d["mu"], dtype=float),
        L_strict=np.asarray(d["L_strict"], dtype=float),
        L_diag_raw=np.asarray(d["L_diag_raw"], dtype=float),
    )


def model_from_checkpoint(data: dict):
    """Rebuild a model from `to_checkpoint` output."""
    if data.get("format_version") != CHECKPOINT_VERSION:
        raise ParameterError(f"unsupported checkpoint version {data.get('format_version')!r}")
    kernel = kernels_mod.from_descriptor(data["kernel"])
    likelihood = likelihood_from_descriptor(data["likelihood"])
    groups = [_group_from_dict(g) for g in data["groups"]]
    if data["model_type"] == "svgp":
        if len(groups) != 1:
            raise ShapeError("svgp checkpoint must have exactly one group")
        return SvgpModel(kernel, likelihood, groups[0])
    transform = transforms_mod.from_descriptor(data["transform"])
    indices = [tuple(i) if isinstance(i, list) else i for i in data["part_indices"]]
    weights = [np.asarray(w, dtype=float) for w in data["part_weights"]]
    return HvgpModel(kernel, transform, likelihood, groups, indices, weights)
