"""Frequency decomposition of transform-invariant kernels.

The load-bearing identities: parts sum back to the base kernel, each part
is PSD, parts pick up a pure phase under the transform, and re-filtering a
part at a different frequency annihilates it.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonicgp import hkd, kernels, transforms
from harmonicgp.errors import InvarianceError, ParameterError, ShapeError
from harmonicgp.seeding import seed_stream


def _pairs():
    """Kernel/transform pairs used across the identity tests."""
    rng = seed_stream(99, "hkd-pairs")
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    return [
        ("rbf-negation", kernels.rbf(lengthscales=1.3), transforms.NegationMask([True, False, True]), 3),
        ("matern-rotation", kernels.matern32(variance=0.7), transforms.Rotation2D(0, 2, 5), 3),
        ("poly-negation", kernels.polynomial(degree=2), transforms.NegationMask([True, True]), 2),
        ("rbf-pca", kernels.rbf(), transforms.PcaNegation(Q[:, :2]), 4),
        (
            "rbf-multiway",
            kernels.rbf(lengthscales=0.8),
            transforms.MultiWayTransform(
                [transforms.NegationMask([True, False, False]), transforms.Rotation2D(1, 2, 3)]
            ),
            3,
        ),
    ]


PAIRS = _pairs()


def test_dft_matrix_is_scaled_unitary():
    for T in (1, 2, 3, 4, 7):
        F = hkd.dft_matrix(T)
        np.testing.assert_allclose(F @ (T * F.conj().T), np.eye(T), atol=1e-12)
        assert F[0, 0] == pytest.approx(1.0 / T)


def test_complex_weights_are_dft_rows():
    F = hkd.dft_matrix(6)
    for t in range(6):
        np.testing.assert_allclose(hkd.complex_weights(6, t), F[t], atol=1e-14)


def test_real_weights_oracles():
    # T = 4: mean filter, cosine filter, alternating-sign filter.
    np.testing.assert_allclose(hkd.real_weights(4, 0), [0.25, 0.25, 0.25, 0.25])
    np.testing.assert_allclose(hkd.real_weights(4, 1), [0.5, 0.0, -0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(hkd.real_weights(4, 2), [0.25, -0.25, 0.25, -0.25])
    # odd T has no alternating part
    np.testing.assert_allclose(hkd.real_weights(3, 1), [2 / 3, -1 / 3, -1 / 3], atol=1e-15)


@pytest.mark.parametrize("T", [2, 3, 4, 5, 8])
def test_real_weights_sum_to_identity_filter(T):
    total = sum(hkd.real_weights(T, t) for t in range(T // 2 + 1))
    expect = np.zeros(T)
    expect[0] = 1.0
    np.testing.assert_allclose(total, expect, atol=1e-14)


def test_weight_index_validation():
    with pytest.raises(ParameterError):
        hkd.complex_weights(4, 4)
    with pytest.raises(ParameterError):
        hkd.real_weights(4, 3)
    with pytest.raises(ParameterError):
        hkd.dft_matrix(0)


@pytest.mark.parametrize("name,kernel,transform,d", PAIRS, ids=[p[0] for p in PAIRS])
def test_real_parts_sum_to_kernel(name, kernel, transform, d):
    rng = seed_stream(0, f"sum-{name}")
    X = rng.standard_normal((7, d))
    Y = rng.standard_normal((5, d))
    parts = hkd.real_decomposition(kernel, transform)
    assert hkd.decomposition_residual(parts, X, Y) < 1e-10
    assert hkd.decomposition_residual(parts, X) < 1e-10


@pytest.mark.parametrize("name,kernel,transform,d", PAIRS, ids=[p[0] for p in PAIRS])
def test_complex_parts_sum_to_kernel(name, kernel, transform, d):
    rng = seed_stream(1, f"csum-{name}")
    X = rng.standard_normal((6, d))
    parts = hkd.complex_decomposition(kernel, transform)
    orbit = transform.orbit_size
    assert len(parts) == orbit
    assert hkd.decomposition_residual(parts, X) < 1e-10


@pytest.mark.parametrize("name,kernel,transform,d", PAIRS, ids=[p[0] for p in PAIRS])
def test_real_parts_are_psd(name, kernel, transform, d):
    rng = seed_stream(2, f"psd-{name}")
    X = rng.standard_normal((20, d))
    for part in hkd.real_decomposition(kernel, transform):
        G = part.gram(X)
        np.testing.assert_allclose(G, G.T, atol=1e-12)
        assert np.linalg.eigvalsh((G + G.T) / 2).min() > -1e-10


def test_complex_parts_are_hermitian_psd():
    kernel = kernels.rbf()
    transform = transforms.Rotation2D(0, 1, 5)
    rng = seed_stream(3, "hpsd")
    X = rng.standard_normal((15, 3))
    for part in hkd.complex_decomposition(kernel, transform):
        G = part.gram(X)
        np.testing.assert_allclose(G, G.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh((G + G.conj().T) / 2).min() > -1e-10


def test_phase_shift_under_transform():
    """k_t(x, G y) = e^{2 pi i t / T} k_t(x, y); conjugate phase on x."""
    kernel = kernels.rbf(lengthscales=0.9)
    transform = transforms.Rotation2D(0, 1, 6)
    rng = seed_stream(4, "phase")
    x = rng.standard_normal(2)
    y = rng.standard_normal(2)
    Gx = transform.apply_power_rows(x[None, :], 1)[0]
    Gy = transform.apply_power_rows(y[None, :], 1)[0]
    T = transform.period
    for t in range(T):
        base = hkd.harmonic_eval(kernel, transform, t, x, y)
        fwd = hkd.harmonic_eval(kernel, transform, t, x, Gy)
        back = hkd.harmonic_eval(kernel, transform, t, Gx, y)
        assert abs(fwd - np.exp(2j * np.pi * t / T) * base) < 1e-12
        assert abs(back - np.exp(-2j * np.pi * t / T) * base) < 1e-12


def test_refiltering_annihilates_other_frequencies():
    """Applying the frequency-s filter to part t's orbit keeps only s = t."""
    kernel = kernels.rbf()
    transform = transforms.Rotation2D(0, 1, 4)
    rng = seed_stream(5, "annihilate")
    x = rng.standard_normal(2)
    y = rng.standard_normal(2)
    T = transform.period
    for t, s in itertools.product(range(T), repeat=2):
        part = hkd.HarmonicPart(kernel, transform, t, "complex", hkd.complex_weights(T, t))
        w = hkd.complex_weights(T, s)
        filtered = sum(
            w[u] * part.eval(x, transform.apply_power_rows(y[None, :], u)[0]) for u in range(T)
        )
        expect = part.eval(x, y) if s == t else 0.0
        assert abs(filtered - expect) < 1e-12


def test_real_part_pairs_conjugate_frequencies():
    kernel = kernels.matern32()
    transform = transforms.Rotation2D(1, 2, 6)
    rng = seed_stream(6, "pairing")
    x = rng.standard_normal(3)
    y = rng.standard_normal(3)
    T = transform.period
    for t in range(T // 2 + 1):
        got = hkd.real_pair_eval(kernel, transform, t, x, y)
        expect = hkd.harmonic_eval(kernel, transform, t, x, y)
        if 0 < t < T - t:
            expect = expect + hkd.harmonic_eval(kernel, transform, T - t, x, y)
        assert abs(got - expect) < 1e-12
        assert abs(got.imag) < 1e-12


def test_multiway_part_counts_and_indices():
    transform = transforms.MultiWayTransform(
        [transforms.NegationMask([True, False, False]), transforms.Rotation2D(1, 2, 4)]
    )
    kernel = kernels.rbf()
    cparts = hkd.complex_decomposition(kernel, transform)
    rparts = hkd.real_decomposition(kernel, transform)
    assert len(cparts) == 2 * 4
    assert len(rparts) == 2 * 3
    assert [p.index for p in rparts] == [
        (0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2),
    ]


def test_multiway_eval_matches_factor_product_weights():
    t1, t2 = 1, 2
    transform = transforms.MultiWayTransform(
        [transforms.NegationMask([True, False, False]), transforms.Rotation2D(1, 2, 3)]
    )
    kernel = kernels.rbf()
    rng = seed_stream(7, "mw")
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    got = hkd.multiway_harmonic_eval(kernel, transform, (t1, t2), x, y)
    w = np.multiply.outer(hkd.complex_weights(2, t1), hkd.complex_weights(3, t2)).ravel()
    stack = hkd.orbit_pair_stack(kernel, transform, x[None, :], y[None, :])
    assert abs(got - complex(w @ stack[:, 0])) < 1e-14


def test_harmonic_gram_matches_part_object():
    kernel = kernels.rbf()
    transform = transforms.Rotation2D(0, 1, 4)
    rng = seed_stream(8, "gram")
    X = rng.standard_normal((6, 2))
    parts = hkd.complex_decomposition(kernel, transform)
    for t in range(4):
        np.testing.assert_allclose(
            hkd.harmonic_gram(kernel, transform, t, X), parts[t].gram(X), atol=1e-14
        )


def test_part_grams_shares_orbit_stack():
    kernel = kernels.matern32()
    transform = transforms.NegationMask([True, True])
    rng = seed_stream(9, "shared")
    X = rng.standard_normal((8, 2))
    parts = hkd.real_decomposition(kernel, transform)
    grams = hkd.part_grams(parts, X)
    for p, G in zip(parts, grams):
        np.testing.assert_allclose(G, p.gram(X), atol=1e-14)
    other = hkd.real_decomposition(kernels.rbf(), transform)
    with pytest.raises(ParameterError):
        hkd.part_grams([parts[0], other[0]], X)


def test_circle_toy_parts_isolate_pure_frequencies():
    """Each orbit filter picks out exactly one complex exponential."""
    kernel = kernels.circle_toy()
    shift = transforms.TorusShift(0, 2 * np.pi / 4, 2 * np.pi)
    assert shift.period == 4
    rng = seed_stream(10, "circle")
    x = rng.uniform(0, 2 * np.pi, size=(1,))
    y = rng.uniform(0, 2 * np.pi, size=(1,))
    delta = float(x[0] - y[0])
    vals = [hkd.harmonic_eval(kernel, shift, t, x, y) for t in range(4)]
    assert abs(vals[0]) < 1e-12
    assert abs(vals[1] - np.exp(-1j * delta)) < 1e-12
    assert abs(vals[2] - np.exp(-2j * delta)) < 1e-12
    assert abs(vals[3]) < 1e-12


def test_decomposition_rejects_noninvariant_kernel():
    kernel = kernels.rbf(lengthscales=np.array([0.5, 2.0]))
    rotation = transforms.Rotation2D(0, 1, 4)
    with pytest.raises(InvarianceError):
        hkd.real_decomposition(kernel, rotation)
    # verify=False skips the probe check
    hkd.real_decomposition(kernel, rotation, verify=False)


def test_part_constructor_validation():
    kernel = kernels.rbf()
    transform = transforms.NegationMask([True])
    with pytest.raises(ParameterError):
        hkd.HarmonicPart(kernel, transform, 0, "spectral", np.ones(2))
    with pytest.raises(ShapeError):
        hkd.HarmonicPart(kernel, transform, 0, "real", np.ones(3))
    with pytest.raises(ParameterError):
        hkd.harmonic_eval(
            kernel,
            transforms.MultiWayTransform([transform, transform]),
            0,
            np.zeros(2),
            np.zeros(2),
        )
    with pytest.raises(ShapeError):
        hkd.multiway_harmonic_eval(
            kernel, transforms.MultiWayTransform([transform, transform]), (0,), np.zeros(2), np.zeros(2)
        )


@settings(max_examples=25, deadline=None)
@given(
    T=st.integers(min_value=2, max_value=8),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_rotation_identity_property(T, seed):
    kernel = kernels.rbf()
    transform = transforms.Rotation2D(0, 1, T)
    rng = seed_stream(seed, "prop")
    X = rng.standard_normal((4, 2))
    parts = hkd.real_decomposition(kernel, transform, verify=False)
    assert hkd.decomposition_residual(parts, X) < 1e-10
