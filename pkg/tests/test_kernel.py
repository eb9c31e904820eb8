import math

import numpy as np
import pytest
from scipy import optimize

from spikebasin.errors import NoValidRadius
from spikebasin.kernel import (
    c_h_compute,
    coherence_bound,
    coherence_estimate,
    convolved_l2_norm_sq,
    dipole_inner,
    dirac_bilinear_norm_sq,
    finite_dipole,
    gaussian_kernel,
    gaussian_profile,
    gram_matrix,
    kernel_from_convolution,
    kernel_from_spec,
    measure_inner,
    measure_norm_h,
    measure_norm_sq,
    closed_form_coherence_for,
    sample_separated_collection,
    sigma_from_k,
)
from spikebasin.spike_model import GeneralizedDipole, ModelConfig
from spikebasin.validation import dipole_limit_order


def unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_dipole(rng, d, spread=1.0):
    return GeneralizedDipole(rng.standard_normal(), rng.standard_normal(), spread * rng.standard_normal(d), unit(rng, d))


def test_gaussian_profile_values():
    k = gaussian_kernel(1.0)
    assert k.rho(0.0) == 1.0
    assert k.rho2_at_0 == -1.0
    assert k.rho(1.0) == pytest.approx(0.6065306597126334, abs=1e-15)
    for s in (0.3, 1.0, 4.0):
        assert gaussian_kernel(s).rho1(0.0) == 0.0


def test_gaussian_rejects_bad_sigma():
    with pytest.raises(ValueError):
        gaussian_kernel(0.0)


def test_sigma_from_k():
    assert sigma_from_k(1) ** 2 == pytest.approx(1 / 24, rel=1e-15)
    assert sigma_from_k(2) ** 2 == pytest.approx(1 / (2.4 * math.log(3) + 24), rel=1e-15)
    vals = [sigma_from_k(k) for k in range(1, 30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("k, expected", [(2, 0.75), (4, 0.25), (7, 0.125)])
def test_coherence_bound(k, expected):
    assert coherence_bound(k) == expected


def test_coherence_bound_needs_two_spikes():
    with pytest.raises(ValueError):
        coherence_bound(1)


def test_closed_form_coherence_only_at_matching_width():
    k = 3
    assert closed_form_coherence_for(gaussian_kernel(sigma_from_k(k)), k, 1.0) == coherence_bound(k)
    assert closed_form_coherence_for(gaussian_kernel(2 * sigma_from_k(k)), k, 2.0) == coherence_bound(k)
    assert closed_form_coherence_for(gaussian_kernel(sigma_from_k(k)), k, 0.5) is None


@pytest.mark.parametrize("d", [1, 2, 3])
def test_dirac_identities(d):
    rng = np.random.default_rng(d)
    kern = gaussian_kernel(0.7)
    t = rng.standard_normal(d)
    v = unit(rng, d)
    dt = GeneralizedDipole(1.0, 0.0, t)
    dp = GeneralizedDipole(0.0, 1.0, t, v)
    assert dipole_inner(dt, dt, kern) == pytest.approx(1.0, abs=1e-12)
    assert abs(dipole_inner(dt, dp, kern)) <= 1e-12
    assert dipole_inner(dp, dp, kern) == pytest.approx(kern.rho2_abs, abs=1e-12)


def test_two_diracs_inner():
    kern = gaussian_kernel(1.0)
    d0 = GeneralizedDipole(1.0, 0.0, [0.0])
    d1 = GeneralizedDipole(1.0, 0.0, [1.0])
    assert dipole_inner(d0, d1, kern) == pytest.approx(math.exp(-0.5), abs=1e-15)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_dipole_inner_symmetric(d):
    rng = np.random.default_rng(10 + d)
    kern = gaussian_kernel(0.8)
    for _ in range(50):
        nu1, nu2 = random_dipole(rng, d), random_dipole(rng, d)
        assert abs(dipole_inner(nu1, nu2, kern) - dipole_inner(nu2, nu1, kern)) <= 1e-12


@pytest.mark.parametrize("d", [1, 2, 3])
def test_finite_eta_limit(d):
    rng = np.random.default_rng(20 + d)
    kern = gaussian_kernel(0.6)
    nu1 = random_dipole(rng, d, 0.3)
    nu2 = random_dipole(rng, d, 0.3)
    exact = dipole_inner(nu1, nu2, kern)
    errs = [abs(measure_inner(finite_dipole(nu1, h), finite_dipole(nu2, h), kern) - exact) for h in (1e-2, 1e-3, 1e-4)]
    assert errs[2] < errs[1] < errs[0]
    pairs = [(random_dipole(rng, d, 0.3), random_dipole(rng, d, 0.3)) for _ in range(5)]
    assert dipole_limit_order(kern, pairs) >= 0.9


def test_gram_matrix_matches_pairwise():
    rng = np.random.default_rng(3)
    kern = gaussian_kernel(0.5)
    dips = [random_dipole(rng, 2) for _ in range(6)]
    G = gram_matrix(dips, kern)
    ref = np.array([[dipole_inner(a, b, kern) for b in dips] for a in dips])
    np.testing.assert_allclose(G, ref, rtol=0, atol=1e-13)


def test_norm_examples():
    kern = gaussian_kernel(1.0)
    assert measure_norm_h([GeneralizedDipole(1.0, 0.0, [0.0])], kern) == 1.0
    pair = [GeneralizedDipole(1.0, 0.0, [0.0]), GeneralizedDipole(-1.0, 0.0, [1.0])]
    assert measure_norm_sq(pair, kern) == pytest.approx(2 - 2 * math.exp(-0.5), abs=1e-15)
    assert measure_norm_sq(pair, kern) == pytest.approx(0.786939, abs=1e-6)


def test_norm_scaling_and_positivity():
    rng = np.random.default_rng(4)
    kern = gaussian_kernel(0.4)
    for _ in range(50):
        dips = [random_dipole(rng, 2) for _ in range(int(rng.integers(1, 11)))]
        assert measure_norm_sq(dips, kern) >= -1e-10
        c = rng.standard_normal()
        scaled = [nu.scaled(c) for nu in dips]
        assert measure_norm_h(scaled, kern) == pytest.approx(abs(c) * measure_norm_h(dips, kern), rel=1e-10, abs=1e-12)


def test_c_h_fails_without_relaxation():
    with pytest.raises(NoValidRadius):
        c_h_compute(gaussian_kernel(1.0), 10.0, q=1.0)


def test_c_h_root_for_unit_gaussian():
    c = c_h_compute(gaussian_kernel(1.0), 10.0, q=0.5)
    root = optimize.brentq(lambda t: math.exp(-t * t / 2) - (1 - t * t / 4), 0.5, 3.0, xtol=1e-15)
    assert abs(math.exp(-c * c / 2) - (1 - c * c / 4)) < 1e-10
    assert c == pytest.approx(root, abs=1e-9)
    assert c == pytest.approx(1.78529, abs=1e-5)


@pytest.mark.parametrize("sigma, eps", [(1.0, 1.0), (0.2, 5.0), (0.5, 0.01)])
def test_c_h_at_most_half_separation(sigma, eps):
    assert c_h_compute(gaussian_kernel(sigma), eps, 0.5) <= eps / 2


def test_coherence_estimate_far_dipoles_vanish():
    cfg = ModelConfig(2, 1, 20.0, 100.0)
    assert coherence_estimate(gaussian_kernel(0.5), cfg, 50) < 1e-12


def test_coherence_estimate_bounded():
    cfg = ModelConfig(2, 2, 0.1, 10.0)
    assert 0 <= coherence_estimate(gaussian_kernel(1.0), cfg, 100) <= 1.0 + 1e-12


def test_coherence_estimate_respects_closed_form():
    cfg = ModelConfig(4, 1, 1.0, 10.0)
    assert coherence_estimate(gaussian_kernel(sigma_from_k(4)), cfg, 2000) <= coherence_bound(4)


def test_separated_collection_is_separated():
    rng = np.random.default_rng(5)
    coll = sample_separated_collection(rng, 5, 0.5, 2, region_radius=4.0)
    pts = np.concatenate([[atom.t for atom in nu] for nu in coll])
    owner = np.concatenate([[i] * len(nu) for i, nu in enumerate(coll)])
    for i in range(len(pts)):
        for j in range(len(pts)):
            if owner[i] != owner[j]:
                assert np.linalg.norm(pts[i] - pts[j]) > 0.5


@pytest.fixture(scope="module")
def conv_kernel():
    K, dK, d2K = gaussian_profile(0.5)
    return kernel_from_convolution(K, 6.0, dK, d2K), K


def test_convolution_of_gaussian_is_wider_gaussian(conv_kernel):
    ck, _ = conv_kernel
    u = np.linspace(-2, 2, 21)
    # autocorrelation of exp(-s^2/(2 w^2)) is proportional to exp(-u^2/(4 w^2))
    np.testing.assert_allclose(ck.rho(u), np.exp(-u**2 / (4 * 0.25)), atol=1e-8)
    np.testing.assert_allclose(ck.rho(u), ck.rho(-u), atol=0)
    assert ck.rho2_at_0 == pytest.approx(-1 / (2 * 0.25), rel=1e-8)


def test_convolution_identity_two_diracs(conv_kernel):
    ck, K = conv_kernel
    atoms = [GeneralizedDipole(1.0, 0.0, [0.0]), GeneralizedDipole(-1.0, 0.0, [0.7])]
    quad = convolved_l2_norm_sq(K, atoms, 6.0)
    assert dirac_bilinear_norm_sq(ck, atoms) == pytest.approx(quad, rel=1e-6)


def test_convolution_dipole_calculus_matches_gaussian(conv_kernel):
    ck, _ = conv_kernel
    g = gaussian_kernel(math.sqrt(2) * 0.5)
    nu1 = GeneralizedDipole(0.7, -0.4, [0.1], [1.0])
    nu2 = GeneralizedDipole(-1.1, 0.9, [0.45], [-1.0])
    assert dipole_inner(nu1, nu2, ck) == pytest.approx(dipole_inner(nu1, nu2, g), abs=1e-7)


@pytest.mark.parametrize(
    "spec, sigma",
    [
        ({"type": "gaussian", "sigma": 0.3}, 0.3),
        ({"type": "gaussian_auto_k"}, 2.0 * sigma_from_k(3)),
    ],
)
def test_kernel_from_spec(spec, sigma):
    assert kernel_from_spec(spec, ModelConfig(3, 1, 2.0, 10.0)).sigma == pytest.approx(sigma, rel=1e-15)
