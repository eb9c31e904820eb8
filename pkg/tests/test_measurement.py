import math

import numpy as np
import pytest

from spikebasin.errors import AllSamplesDegenerate
from spikebasin.kernel import gaussian_kernel, sigma_from_k
from spikebasin.measurement import (
    FourierOperator,
    apply,
    apply_dipoles,
    apply_dirac_derivative,
    apply_dirac_second_derivative,
    compute_D_A_R,
    draw_random_operator,
    estimate_rip,
    grid_operator,
    re_inner,
    rip_from_samples,
)
from spikebasin.spike_model import GeneralizedDipole, ModelConfig, SpikeTrain, sample_theta, train_to_dipoles
from conftest import single_frequency_operator


def unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def dirac_sum(op, atoms):
    """Measurements of sum a_i delta_{t_i} straight from the operator atoms."""
    return sum(a * op.alpha(np.asarray(t, dtype=float)) for a, t in atoms)


def test_zero_frequency_is_constant():
    op = single_frequency_operator([0.0])
    cfg = ModelConfig(1, 1, 1.0, 5.0)
    for t in (-3.0, 0.0, 2.5):
        np.testing.assert_allclose(apply(op, SpikeTrain([1.0], [[t]], cfg)), [1.0])


def test_single_spike_modulus():
    op = draw_random_operator(50, gaussian_kernel(0.5), 2, 1)
    y = apply(op, SpikeTrain([1.0], [[0.3, -0.2]], ModelConfig(1, 2, 1.0, 1.0)))
    np.testing.assert_allclose(np.abs(y), np.abs(op.weights) / math.sqrt(op.m), rtol=1e-14)


def test_apply_hand_value():
    op = single_frequency_operator([math.pi])
    y = apply(op, SpikeTrain([1.0], [[1.0]], ModelConfig(1, 1, 1.0, 1.0)))
    assert y[0] == pytest.approx(-1.0 + 0j, abs=1e-15)


def test_apply_is_linear():
    rng = np.random.default_rng(0)
    op = draw_random_operator(64, gaussian_kernel(0.5), 2, 3)
    cfg = ModelConfig(3, 2, 0.2, 1.0)
    x, z = sample_theta(cfg, rng_seed=1), sample_theta(cfg, rng_seed=2)
    a, b = rng.standard_normal(2)
    merged = SpikeTrain(np.concatenate([a * x.amplitudes, b * z.amplitudes]),
                        np.vstack([x.positions, z.positions]), ModelConfig(6, 2, 1e-6, 1.0))
    lhs = apply(op, merged)
    rhs = a * apply(op, x) + b * apply(op, z)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_apply_warns_outside_ball():
    op = single_frequency_operator([1.0])
    with pytest.warns(RuntimeWarning):
        apply(op, SpikeTrain([1.0], [[2.0]], ModelConfig(1, 1, 1.0, 1.0)))


def test_random_operator_deterministic():
    a = draw_random_operator(10, gaussian_kernel(0.3), 2, 42)
    b = draw_random_operator(10, gaussian_kernel(0.3), 2, 42)
    np.testing.assert_array_equal(a.frequencies, b.frequencies)


def test_random_operator_matches_kernel_in_expectation():
    sigma = 0.4
    op = draw_random_operator(100_000, gaussian_kernel(sigma), 1, 0)
    t, s = np.array([0.1]), np.array([0.45])
    val = np.sum(op.alpha(t) * np.conj(op.alpha(s)))
    assert abs(val - math.exp(-0.35**2 / (2 * sigma**2))) <= 0.01


def test_derivative_hand_value():
    op = single_frequency_operator([1.0])
    np.testing.assert_allclose(apply_dirac_derivative(op, [0.0], [1.0]), [1j])


def test_derivatives_vanish_at_zero_frequency():
    op = single_frequency_operator([0.0, 0.0])
    np.testing.assert_array_equal(apply_dirac_derivative(op, [0.3, 0.1], [0.0, 1.0]), [0])
    np.testing.assert_array_equal(apply_dirac_second_derivative(op, [0.3, 0.1], [0.0, 1.0], [1.0, 0.0]), [0])


def test_derivative_requires_unit_direction():
    op = single_frequency_operator([1.0, 2.0])
    with pytest.raises(ValueError):
        apply_dirac_derivative(op, [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        apply_dirac_second_derivative(op, [0.0, 0.0], [1.0, 0.0], [2.0, 0.0])


@pytest.mark.parametrize("d", [1, 2, 3])
def test_first_derivative_matches_finite_difference(d):
    rng = np.random.default_rng(d)
    op = draw_random_operator(40, gaussian_kernel(0.5), d, d)
    t, v = 0.3 * rng.standard_normal(d), unit(rng, d)
    exact = apply_dirac_derivative(op, t, v)
    errs = []
    etas = (1e-2, 1e-3, 1e-4)
    for h in etas:
        # delta'_{t,v} is the limit of -(delta_{t + h v} - delta_t) / h
        fd = -(dirac_sum(op, [(1.0, t + h * v)]) - dirac_sum(op, [(1.0, t)])) / h
        errs.append(np.linalg.norm(fd - exact))
    assert np.polyfit(np.log(etas), np.log(errs), 1)[0] >= 0.9
    h = 1e-5
    fd = -(dirac_sum(op, [(1.0, t + h * v)]) - dirac_sum(op, [(1.0, t)])) / h
    assert np.linalg.norm(fd - exact) <= 10 * h * np.linalg.norm(op.frequencies, axis=1).max() ** 2


@pytest.mark.parametrize("d", [1, 2])
def test_second_derivative_matches_second_difference(d):
    rng = np.random.default_rng(10 + d)
    op = draw_random_operator(30, gaussian_kernel(0.8), d, d)
    t, v = 0.2 * rng.standard_normal(d), unit(rng, d)
    exact = apply_dirac_second_derivative(op, t, v, v)
    h = 1e-3
    fd = dirac_sum(op, [(1.0, t + h * v), (-2.0, t), (1.0, t - h * v)]) / h**2
    scale = np.abs(op.frequencies).max() ** 4 / math.sqrt(op.m)
    assert np.linalg.norm(fd - exact) <= scale * h**2 * math.sqrt(op.m)


def test_second_derivative_symmetric_and_bounded():
    rng = np.random.default_rng(7)
    op = draw_random_operator(200, gaussian_kernel(0.5), 3, 7)
    t, v, w = rng.standard_normal(3), unit(rng, 3), unit(rng, 3)
    np.testing.assert_allclose(apply_dirac_second_derivative(op, t, v, w), apply_dirac_second_derivative(op, t, w, v))
    D = compute_D_A_R(op)
    assert np.linalg.norm(apply_dirac_second_derivative(op, t, v, v)) <= math.sqrt(op.m) * D


def test_derivative_direction_linearity():
    rng = np.random.default_rng(8)
    op = draw_random_operator(50, gaussian_kernel(0.5), 3, 8)
    t, u = rng.standard_normal(3), rng.standard_normal(3)
    lhs = sum(u[j] * apply_dirac_derivative(op, t, np.eye(3)[j]) for j in range(3))
    rhs = np.linalg.norm(u) * apply_dirac_derivative(op, t, u / np.linalg.norm(u))
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_apply_dipoles_matches_parts():
    rng = np.random.default_rng(9)
    op = draw_random_operator(40, gaussian_kernel(0.5), 2, 9)
    t, v = rng.standard_normal(2), unit(rng, 2)
    y = apply_dipoles(op, [GeneralizedDipole(0.7, -1.3, t, v)])
    ref = 0.7 * op.alpha(t) - 1.3 * apply_dirac_derivative(op, t, v)
    np.testing.assert_allclose(y, ref, atol=1e-14)


@pytest.mark.parametrize(
    "freqs, expected",
    [
        (np.zeros((4, 2)), 0.0),
        (np.array([[3.0, 4.0]]), 25.0),
    ],
)
def test_D_A_R(freqs, expected):
    assert compute_D_A_R(FourierOperator(freqs, np.ones(len(freqs)))) == expected


def test_D_A_R_dominates_sampled_second_derivatives():
    rng = np.random.default_rng(11)
    op = draw_random_operator(20, gaussian_kernel(0.5), 2, 11)
    D = compute_D_A_R(op)
    best = 0.0
    for _ in range(200):
        t, v, w = rng.standard_normal(2), unit(rng, 2), unit(rng, 2)
        best = max(best, np.abs(apply_dirac_second_derivative(op, t, v, w)).max())
    assert best <= D
    l = int(np.argmax(np.sum(op.frequencies**2, axis=1)))
    v = op.frequencies[l] / np.linalg.norm(op.frequencies[l])
    assert abs(apply_dirac_second_derivative(op, [0.0, 0.0], v, v)[l]) == pytest.approx(D, rel=1e-12)


def test_operator_json_roundtrip():
    op = draw_random_operator(7, gaussian_kernel(0.5), 2, 3)
    data = op.to_dict()
    assert {"m", "d", "frequencies", "weights", "seed"} <= set(data)
    back = FourierOperator.from_dict(data)
    np.testing.assert_array_equal(back.frequencies, op.frequencies)
    assert back.seed == 3


def test_grid_operator_shape():
    op = grid_operator(3)
    assert op.m == 7 and op.d == 1


def test_re_inner():
    x = np.array([1 + 2j, 3 - 1j])
    y = np.array([2 - 1j, 1j])
    assert re_inner(x, y) == pytest.approx(np.real(np.vdot(y, x)))


def test_rip_all_degenerate():
    op = draw_random_operator(10, gaussian_kernel(0.5), 1, 0)
    kern = gaussian_kernel(0.5)
    x = [GeneralizedDipole(1.0, 0.0, [0.2]), GeneralizedDipole(-1.0, 0.0, [0.2])]
    with pytest.raises(AllSamplesDegenerate):
        rip_from_samples(op, kern, [x], trials=1)


def test_rip_estimate_concentrates():
    cfg = ModelConfig(2, 1, 1.0, 2.0)
    kern = gaussian_kernel(sigma_from_k(2))
    op = draw_random_operator(20_000, kern, 1, 0)
    est = estimate_rip(op, cfg, kern, 200, rng_seed=1)
    assert est.ratio_min <= est.ratio_max
    assert est.gamma_lower == max(1 - est.ratio_min, est.ratio_max - 1, 0.0)
    assert est.gamma_lower <= 0.3
    est2 = estimate_rip(op, cfg, kern, 200, rng_seed=1, include_derivatives=True)
    assert est2.gamma_lower <= 0.3


def test_rip_estimate_deterministic():
    cfg = ModelConfig(2, 1, 1.0, 2.0)
    kern = gaussian_kernel(0.3)
    op = draw_random_operator(500, kern, 1, 0)
    assert estimate_rip(op, cfg, kern, 30, 5) == estimate_rip(op, cfg, kern, 30, 5)
