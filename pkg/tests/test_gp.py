"""Variational GP models: bound values, gradients, the two predictive
paths, the orbit-model equivalence, and checkpointing."""

import json

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import multivariate_normal, norm

from harmonicgp import autodiff as ad
from harmonicgp import gp, kernels, transforms
from harmonicgp.errors import NumericalError, ParameterError, ShapeError
from harmonicgp.seeding import seed_stream

NEG2 = transforms.NegationMask([True, False])


def _toy_regression(seed=0, n=8, d=2, m=3):
    rng = seed_stream(seed, "toy")
    X = rng.standard_normal((n, d))
    y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(n)
    Z = rng.standard_normal((m, d))
    return X, y, Z


def _hvgp(seed=0, noise=0.1, **kw):
    X, y, Z = _toy_regression(seed, **kw)
    model = gp.build_hvgp(kernels.rbf(), NEG2, gp.GaussianLikelihood(noise), Z)
    return model, X, y


# -- cholesky policy ---------------------------------------------------------


def test_jittered_cholesky_exact_when_well_conditioned():
    rng = seed_stream(1, "chol")
    B = rng.standard_normal((4, 4))
    K = B @ B.T + 4 * np.eye(4)
    L, eps = gp.jittered_cholesky(K)
    assert eps == 0.0
    np.testing.assert_allclose(L @ L.T, K, atol=1e-12)


def test_jittered_cholesky_escalates_on_singular_input():
    L, eps = gp.jittered_cholesky(np.ones((3, 3)))
    assert eps > 0.0
    np.testing.assert_allclose(L @ L.T, np.ones((3, 3)) + eps * np.eye(3), atol=1e-12)


def test_jittered_cholesky_gives_up_on_indefinite_input():
    with pytest.raises(NumericalError):
        gp.jittered_cholesky(-np.eye(3))


# -- closed-form pieces ------------------------------------------------------


def test_kl_gaussian_oracle():
    rng = seed_stream(2, "kl")
    B = rng.standard_normal((4, 4))
    K = B @ B.T + 4 * np.eye(4)
    C = rng.standard_normal((4, 4))
    S = C @ C.T + 2 * np.eye(4)
    mu = rng.standard_normal(4)
    Ki = np.linalg.inv(K)
    expect = 0.5 * (
        np.trace(Ki @ S)
        + mu @ Ki @ mu
        - 4
        + np.linalg.slogdet(K)[1]
        - np.linalg.slogdet(S)[1]
    )
    assert gp.kl_gaussian(mu, S, K) == pytest.approx(expect, rel=1e-10)
    assert gp.kl_gaussian(np.zeros(4), K, K) == pytest.approx(0.0, abs=1e-10)


def test_optimal_S_oracle():
    rng = seed_stream(3, "opt")
    B = rng.standard_normal((3, 3))
    Kuu = B @ B.T + 3 * np.eye(3)
    Kuf = rng.standard_normal((3, 6))
    lam = 1.0 / 0.2
    expect = Kuu @ np.linalg.solve(Kuu + lam * Kuf @ Kuf.T, Kuu)
    np.testing.assert_allclose(gp.optimal_S(Kuu, Kuf, lam), expect, atol=1e-10)
    # per-datum precision vector agrees with the scalar case when constant
    np.testing.assert_allclose(
        gp.optimal_S(Kuu, Kuf, np.full(6, lam)), expect, atol=1e-10
    )


def test_optimal_S_hermitian_complex():
    rng = seed_stream(4, "optc")
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    Kuu = B @ B.conj().T + 3 * np.eye(3)
    Kuf = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    S = gp.optimal_S(Kuu, Kuf, 2.0)
    np.testing.assert_allclose(S, S.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(S).min() > 0


# -- likelihoods -------------------------------------------------------------


def test_gaussian_expected_log_prob_closed_form():
    y = np.array([0.3, -1.1])
    mean = np.array([0.1, 0.4])
    var = np.array([0.5, 2.0])
    noise = 0.7
    out = gp.GaussianLikelihood(noise).expected_log_prob_var(
        y, ad.Var(mean), ad.Var(var), ad.Var(np.log(noise))
    )
    expect = -0.5 * np.log(2 * np.pi * noise) - ((y - mean) ** 2 + var) / (2 * noise)
    np.testing.assert_allclose(out.data, expect, atol=1e-12)


def test_gaussian_log_pred_density_oracle():
    lik = gp.GaussianLikelihood(0.3)
    y, mean, var = np.array([0.5]), np.array([-0.2]), np.array([0.8])
    expect = norm.logpdf(y, loc=mean, scale=np.sqrt(var + 0.3))
    np.testing.assert_allclose(lik.log_pred_density(y, mean, var), expect, atol=1e-12)
    m2, v2 = lik.predict_y(mean, var)
    assert m2 is mean and v2[0] == pytest.approx(1.1)


def test_gaussian_rejects_nonpositive_noise():
    with pytest.raises(ParameterError):
        gp.GaussianLikelihood(0.0)


def test_binary_labels_conventions():
    np.testing.assert_allclose(gp.binary_labels([0, 1, 1, 0]), [-1, 1, 1, -1])
    np.testing.assert_allclose(gp.binary_labels([-1.0, 1.0]), [-1, 1])
    with pytest.raises(ParameterError):
        gp.binary_labels([0.0, 2.0])


def test_bernoulli_expectation_matches_quadrature():
    lik = gp.BernoulliLikelihood()
    for y, m, v in [(1.0, 0.4, 0.9), (-1.0, -1.3, 2.5), (1.0, 2.0, 0.1)]:
        got = lik.expected_log_prob_var(
            np.array([y]), ad.Var(np.array([m])), ad.Var(np.array([v]))
        ).data[0]
        expect, _ = quad(
            lambda f: norm.logcdf(y * f) * norm.pdf(f, loc=m, scale=np.sqrt(v)),
            m - 12 * np.sqrt(v),
            m + 12 * np.sqrt(v),
        )
        # 20-node quadrature truncation is ~1e-7 on these moments
        assert got == pytest.approx(expect, abs=5e-6)


def test_bernoulli_predictive_probit():
    lik = gp.BernoulliLikelihood()
    mean, var = np.array([0.7]), np.array([1.5])
    np.testing.assert_allclose(
        lik.predict_proba(mean, var), norm.cdf(mean / np.sqrt(1 + var)), atol=1e-12
    )
    # class probabilities are complementary
    p1 = np.exp(lik.log_pred_density(np.array([1.0]), mean, var))
    p0 = np.exp(lik.log_pred_density(np.array([-1.0]), mean, var))
    assert p1[0] + p0[0] == pytest.approx(1.0, abs=1e-12)


def test_likelihood_descriptor_round_trip():
    g = gp.likelihood_from_descriptor(gp.GaussianLikelihood(0.25).descriptor())
    assert g.noise_variance == pytest.approx(0.25)
    assert gp.likelihood_from_descriptor({"kind": "bernoulli"}).kind == "bernoulli"
    with pytest.raises(ParameterError):
        gp.likelihood_from_descriptor({"kind": "poisson"})


# -- inducing groups and construction ----------------------------------------


def test_inducing_group_round_trips_cholesky():
    rng = seed_stream(5, "grp")
    L = np.tril(rng.standard_normal((3, 3)))
    np.fill_diagonal(L, np.abs(np.diag(L)) + 0.2)
    g = gp.InducingGroup.from_chol(rng.standard_normal((3, 2)), rng.standard_normal(3), L)
    np.testing.assert_allclose(g.L, L, atol=1e-12)
    np.testing.assert_allclose(g.S, L @ L.T, atol=1e-12)
    with pytest.raises(ParameterError):
        gp.InducingGroup.from_chol(np.zeros((2, 1)), np.zeros(2), -np.eye(2))
    with pytest.raises(ShapeError):
        gp.InducingGroup.from_chol(np.zeros((3, 1)), np.zeros(2), np.eye(2))


def test_build_hvgp_structure():
    model, X, y = _hvgp()
    assert model.num_parts == 2
    assert model.num_inducing == 6
    assert [p.index for p in model.parts()] == [0, 1]
    # initial state: mu = 0, S_t = part gram
    for part, g in zip(model.parts(), model.groups):
        np.testing.assert_allclose(g.mu, 0.0)
        np.testing.assert_allclose(g.S, np.real(part.gram(g.Z)), atol=1e-8)


def test_build_hvgp_per_part_inducing_lists():
    rng = seed_stream(6, "zlist")
    Zs = [rng.standard_normal((3, 2)), rng.standard_normal((5, 2))]
    model = gp.build_hvgp(kernels.rbf(), NEG2, gp.GaussianLikelihood(), Zs)
    assert [g.m for g in model.groups] == [3, 5]
    with pytest.raises(ShapeError):
        gp.build_hvgp(kernels.rbf(), NEG2, gp.GaussianLikelihood(), Zs[:1])


def test_build_hvgp_verifies_invariance():
    aniso = kernels.rbf(lengthscales=np.array([0.5, 2.0]))
    rot = transforms.Rotation2D(0, 1, 3)
    Z = seed_stream(7, "inv").standard_normal((3, 2))
    from harmonicgp.errors import InvarianceError

    with pytest.raises(InvarianceError):
        gp.build_hvgp(aniso, rot, gp.GaussianLikelihood(), Z)
    gp.build_hvgp(aniso, rot, gp.GaussianLikelihood(), Z, verify=False)


def test_models_reject_untrainable_kernels():
    with pytest.raises(ParameterError):
        gp.build_svgp(kernels.circle_toy(), gp.GaussianLikelihood(), np.zeros((2, 1)))


# -- the bound ---------------------------------------------------------------


def test_elbo_single_point_hand_value():
    """One datum at the inducing point, all scales 1: the bound is
    -log sqrt(2 pi) - 1 exactly."""
    model = gp.build_svgp(kernels.rbf(), gp.GaussianLikelihood(1.0), np.zeros((1, 1)))
    val = gp.elbo(model, np.zeros((1, 1)), np.ones(1))
    assert val == pytest.approx(-1.9189385332046727, abs=1e-12)


def test_elbo_minibatch_scaling():
    model, X, y = _hvgp(n=8)
    full = gp.elbo(model, X, y)
    halves = [
        gp.elbo(model, X[:4], y[:4], data_size=8),
        gp.elbo(model, X[4:], y[4:], data_size=8),
    ]
    assert (halves[0] + halves[1]) / 2 == pytest.approx(full, rel=1e-10)


def test_elbo_never_exceeds_evidence():
    X, y, Z = _toy_regression(seed=8, n=10, m=4)
    noise = 0.3
    kernel = kernels.rbf(lengthscales=1.2)
    evidence = gp.log_evidence(kernel, X, y, noise)
    model = gp.build_svgp(kernel, gp.GaussianLikelihood(noise), Z)
    rng = seed_stream(9, "qdraws")
    for _ in range(20):
        mu = rng.standard_normal(4)
        C = rng.standard_normal((4, 4))
        L = np.tril(C)
        np.fill_diagonal(L, np.abs(np.diag(C)) + 0.1)
        model.group = gp.InducingGroup.from_chol(Z, mu, L)
        assert gp.elbo(model, X, y) <= evidence + 1e-8


def test_elbo_tight_at_full_inducing_with_optimal_q():
    """Z = X with the optimal q collapses the bound to the evidence and
    the predictive to the exact posterior."""
    X, y, _ = _toy_regression(seed=10, n=9)
    noise = 0.2
    kernel = kernels.matern32(lengthscales=0.8)
    Kff = np.real(kernels.gram(kernel, X))
    mu_opt = Kff @ np.linalg.solve(Kff + noise * np.eye(9), y)
    S_opt = gp.optimal_S(Kff, Kff, 1.0 / noise)
    L, _ = gp.jittered_cholesky(S_opt)
    model = gp.build_svgp(kernel, gp.GaussianLikelihood(noise), X)
    model.group = gp.InducingGroup.from_chol(X, mu_opt, L)
    assert gp.elbo(model, X, y) == pytest.approx(gp.log_evidence(kernel, X, y, noise), abs=1e-8)
    Xs = seed_stream(11, "xs").standard_normal((6, 2))
    mean, var = gp.predict(model, Xs)
    emean, evar = gp.exact_gp_posterior(kernel, X, y, noise, Xs)
    np.testing.assert_allclose(mean, emean, atol=1e-8)
    np.testing.assert_allclose(var, evar, atol=1e-8)


def test_log_evidence_oracle():
    X, y, _ = _toy_regression(seed=12, n=6)
    kernel = kernels.rbf()
    noise = 0.4
    K = np.real(kernels.gram(kernel, X)) + noise * np.eye(6)
    expect = multivariate_normal(mean=np.zeros(6), cov=K).logpdf(y)
    assert gp.log_evidence(kernel, X, y, noise) == pytest.approx(expect, rel=1e-10)


def test_exact_gp_posterior_oracle():
    X, y, _ = _toy_regression(seed=13, n=7)
    kernel = kernels.rbf(lengthscales=0.9)
    noise = 0.15
    Xs = seed_stream(14, "xs2").standard_normal((4, 2))
    K = np.real(kernels.gram(kernel, X)) + noise * np.eye(7)
    Ks = np.real(kernels.gram(kernel, X, Xs))
    mean = Ks.T @ np.linalg.solve(K, y)
    var = 1.0 - np.einsum("ij,ji->i", Ks.T, np.linalg.solve(K, Ks))
    gmean, gvar = gp.exact_gp_posterior(kernel, X, y, noise, Xs)
    np.testing.assert_allclose(gmean, mean, atol=1e-10)
    np.testing.assert_allclose(gvar, var, atol=1e-10)


# -- gradients ----------------------------------------------------------------


def _fd_check(model, X, y, tol=1e-4, eps=1e-5):
    val, grads = gp.elbo_grad(model, X, y)
    vec, spec = gp.flatten_params(grads)
    saved = {k: v.copy() for k, v in gp.params(model).items()}
    pvec, pspec = gp.flatten_params(saved)
    assert [s[0] for s in spec] == [s[0] for s in pspec]
    num = np.zeros_like(pvec)
    for i in range(pvec.size):
        for sgn in (1.0, -1.0):
            bumped = pvec.copy()
            bumped[i] += sgn * eps
            gp.set_params(model, gp.unflatten_params(bumped, pspec))
            num[i] += sgn * gp.elbo(model, X, y) / (2 * eps)
    gp.set_params(model, saved)
    worst = np.max(np.abs(vec - num) / np.maximum(1.0, np.abs(num)))
    assert worst < tol, f"worst relative gradient error {worst:.3e}"
    return val


def test_elbo_grad_matches_fd_gaussian_hvgp():
    model, X, y = _hvgp(seed=15, n=7, m=3)
    _fd_check(model, X, y)


def test_elbo_grad_matches_fd_bernoulli_svgp():
    rng = seed_stream(16, "bern")
    X = rng.standard_normal((8, 2))
    y = (X[:, 0] > 0).astype(float)
    Z = rng.standard_normal((3, 2))
    model = gp.build_svgp(kernels.matern32(), gp.BernoulliLikelihood(), Z)
    _fd_check(model, X, y)


def test_elbo_grad_matches_fd_multiway():
    rng = seed_stream(17, "mw")
    X = rng.standard_normal((6, 3))
    y = rng.standard_normal(6)
    Z = rng.standard_normal((2, 3))
    tf = transforms.MultiWayTransform(
        [transforms.NegationMask([True, False, False]), transforms.NegationMask([False, False, True])]
    )
    model = gp.build_hvgp(kernels.rbf(), tf, gp.GaussianLikelihood(0.2), Z)
    assert model.num_parts == 4
    _fd_check(model, X, y, tol=2e-4)


def test_set_params_rejects_unknown_names():
    model, _, _ = _hvgp()
    with pytest.raises(ParameterError):
        gp.set_params(model, {"bogus": np.zeros(1)})


# -- prediction paths ---------------------------------------------------------


def _randomize_q(model, seed=18):
    rng = seed_stream(seed, "randq")
    for gi, g in enumerate(model.groups):
        C = rng.standard_normal((g.m, g.m))
        L = np.tril(C)
        np.fill_diagonal(L, np.abs(np.diag(C)) + 0.3)
        model.groups[gi] = gp.InducingGroup.from_chol(g.Z, rng.standard_normal(g.m), L)


def test_breakdown_sums_to_totals():
    model, X, y = _hvgp(seed=19)
    _randomize_q(model)
    Xs = seed_stream(20, "xs3").standard_normal((5, 2))
    mean, var, detail = gp.predict(model, Xs, breakdown=True)
    np.testing.assert_allclose(np.sum(detail["mean"], axis=0), mean, atol=1e-12)
    np.testing.assert_allclose(np.sum(detail["var"], axis=0), var, atol=1e-12)
    assert detail["part_index"] == [0, 1]


def test_threaded_prediction_is_deterministic():
    model, X, y = _hvgp(seed=21)
    _randomize_q(model, seed=22)
    Xs = seed_stream(23, "xs4").standard_normal((30, 2))
    m1, v1 = gp.predict(model, Xs, threads=1)
    m2, v2 = gp.predict(model, Xs, threads=2)
    np.testing.assert_allclose(m1, m2, atol=1e-12)
    np.testing.assert_allclose(v1, v2, atol=1e-12)


def test_joint_predict_reduces_to_independent_parts():
    model, X, y = _hvgp(seed=24)
    _randomize_q(model, seed=25)
    Xs = seed_stream(26, "xs5").standard_normal((6, 2))
    mu_joint = np.concatenate([g.mu for g in model.groups])
    sizes = [g.m for g in model.groups]
    S_joint = np.zeros((sum(sizes), sum(sizes)))
    at = 0
    for g in model.groups:
        S_joint[at : at + g.m, at : at + g.m] = g.S
        at += g.m
    jm, jv = gp.hvgp_joint_predict(model, Xs, mu_joint, S_joint)
    m, v = gp.predict(model, Xs)
    np.testing.assert_allclose(jm, m, atol=1e-10)
    np.testing.assert_allclose(jv, v, atol=1e-10)
    with pytest.raises(ShapeError):
        gp.hvgp_joint_predict(model, Xs, mu_joint[:-1], S_joint)


def test_orbit_model_matches_decomposed_model():
    """Any independent per-part q over shared Z has an exactly equivalent
    plain sparse model on the orbit [Z; G(Z)]."""
    rng = seed_stream(27, "orbit")
    Z = rng.standard_normal((4, 2))
    model = gp.build_hvgp(kernels.rbf(lengthscales=0.9), NEG2, gp.GaussianLikelihood(0.1), Z)
    _randomize_q(model, seed=28)
    orbit = gp.build_orbit_svgp(model)
    assert orbit.num_inducing == 8
    Xs = rng.standard_normal((7, 2))
    hm, hv = gp.predict(model, Xs)
    sm, sv = gp.predict(orbit, Xs)
    np.testing.assert_allclose(sm, hm, atol=1e-8)
    np.testing.assert_allclose(sv, hv, atol=1e-8)


def test_orbit_model_requires_two_shared_parts():
    rng = seed_stream(29, "orbitbad")
    Z = rng.standard_normal((3, 2))
    rot = gp.build_hvgp(kernels.rbf(), transforms.Rotation2D(0, 1, 4), gp.GaussianLikelihood(), Z)
    with pytest.raises(ParameterError):
        gp.build_orbit_svgp(rot)
    model = gp.build_hvgp(kernels.rbf(), NEG2, gp.GaussianLikelihood(), Z)
    model.groups[1] = gp.InducingGroup.from_chol(
        Z + 1.0, np.zeros(3), np.eye(3)
    )
    with pytest.raises(ParameterError):
        gp.build_orbit_svgp(model)


# -- checkpointing -----------------------------------------------------------


@pytest.mark.parametrize("kind", ["svgp", "hvgp"])
def test_checkpoint_json_round_trip(kind):
    if kind == "svgp":
        X, y, Z = _toy_regression(seed=30)
        model = gp.build_svgp(kernels.matern32(variance=0.8), gp.BernoulliLikelihood(), Z)
        y = (y > 0).astype(float)
    else:
        model, X, y = _hvgp(seed=31)
        _randomize_q(model, seed=32)
    blob = json.dumps(gp.to_checkpoint(model))
    back = gp.model_from_checkpoint(json.loads(blob))
    assert back.model_type == model.model_type
    for name, val in gp.params(model).items():
        np.testing.assert_allclose(gp.params(back)[name], val, atol=1e-15)
    Xs = seed_stream(33, "xs6").standard_normal((4, 2))
    np.testing.assert_allclose(gp.predict(back, Xs)[0], gp.predict(model, Xs)[0], atol=1e-12)
    assert gp.elbo(back, X, y) == pytest.approx(gp.elbo(model, X, y), abs=1e-12)


def test_checkpoint_version_guard():
    model, _, _ = _hvgp()
    data = gp.to_checkpoint(model)
    data["format_version"] = -1
    with pytest.raises(ParameterError):
        gp.model_from_checkpoint(data)


def test_clone_is_independent():
    model, X, y = _hvgp(seed=34)
    twin = model.clone()
    before = gp.elbo(model, X, y)
    twin.groups[0].mu += 1.0
    assert gp.elbo(model, X, y) == pytest.approx(before, abs=0)
    assert gp.elbo(twin, X, y) != pytest.approx(before)
