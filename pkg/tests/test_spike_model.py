import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikebasin.errors import SamplingExhausted
from spikebasin.spike_model import (
    GeneralizedDipole,
    ModelConfig,
    SpikeTrain,
    is_in_theta,
    min_separation,
    pack,
    perturb,
    sample_theta,
    sort_by_amplitude,
    sort_by_position,
    unpack,
)


@pytest.mark.parametrize(
    "k, d, a, t, expected",
    [
        (1, 1, [2.0], [[0.5]], [2.0, 0.5]),
        (2, 2, [1.0, -1.0], [[0, 0], [1, 1]], [1, -1, 0, 0, 1, 1]),
    ],
)
def test_pack_layout(k, d, a, t, expected):
    train = SpikeTrain(a, t, ModelConfig(k, d, 0.1, 5.0))
    np.testing.assert_array_equal(pack(train), expected)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_pack_unpack_roundtrip(k, d, seed):
    cfg = ModelConfig(k, d, 0.1, 3.0)
    x = np.random.default_rng(seed).standard_normal(k * (d + 1))
    np.testing.assert_array_equal(pack(unpack(x, cfg)), x)


@pytest.mark.parametrize(
    "positions, expected",
    [
        ([[0.0], [1.0], [3.0]], 1.0),
        ([[0.0, 0.0], [3.0, 4.0]], 5.0),
    ],
)
def test_min_separation(positions, expected):
    k, d = np.shape(positions)
    train = SpikeTrain(np.ones(k), positions, ModelConfig(k, d, 0.5, 10.0))
    assert min_separation(train) == expected


def test_min_separation_single_spike_is_infinite():
    assert min_separation(SpikeTrain([1.0], [[0.2]], ModelConfig(1, 1, 1.0, 1.0))) == math.inf


@pytest.mark.parametrize(
    "t, R, expected",
    [
        ([0.0, 1.5], 2.0, True),
        ([0.0, 1.0], 2.0, False),  # separation must be strict
        ([0.0, 1.5], 1.0, False),
    ],
)
def test_is_in_theta(t, R, expected):
    train = SpikeTrain([1.0, 1.0], [[x] for x in t], ModelConfig(2, 1, 1.0, R))
    assert is_in_theta(train) is expected


def test_ball_boundary_is_allowed_but_not_interior():
    train = SpikeTrain([1.0], [[1.0]], ModelConfig(1, 1, 0.5, 1.0))
    assert is_in_theta(train)
    assert not is_in_theta(train, strict_interior=True)


def test_config_rejects_unfillable_separation():
    with pytest.raises(ValueError):
        ModelConfig(2, 1, 4.0, 2.0)
    ModelConfig(1, 1, 4.0, 2.0)


def test_dipole_direction_must_be_unit():
    with pytest.raises(ValueError):
        GeneralizedDipole(1.0, 1.0, [0.0, 0.0], [1.0, 1.0])
    GeneralizedDipole(1.0, 0.0, [0.0, 0.0])


def test_sample_single_spike_lands_in_ball():
    cfg = ModelConfig(1, 3, 0.5, 2.0)
    for seed in range(20):
        assert np.linalg.norm(sample_theta(cfg, rng_seed=seed).positions) <= 2.0


@pytest.mark.parametrize("seed", range(10))
def test_sample_theta_is_separated(seed):
    cfg = ModelConfig(3, 1, 0.5, 2.0)
    train = sample_theta(cfg, (1.0, 2.0), seed)
    assert is_in_theta(train)
    assert np.all((train.amplitudes >= 1.0) & (train.amplitudes <= 2.0))


def test_sample_theta_is_deterministic():
    cfg = ModelConfig(3, 2, 0.5, 2.0)
    assert sample_theta(cfg, rng_seed=11) == sample_theta(cfg, rng_seed=11)


def test_sample_theta_exhausts_on_empty_set():
    # at most 3 points with spacing > 1 fit in [-1, 1]
    with pytest.raises(SamplingExhausted):
        sample_theta(ModelConfig(10, 1, 1.0, 1.0), rng_seed=0, max_attempts=20_000)


def test_sample_theta_rejects_zero_in_range():
    with pytest.raises(ValueError):
        sample_theta(ModelConfig(1, 1, 1.0, 1.0), (-1.0, 1.0))


def test_perturb_zero_is_identity():
    cfg = ModelConfig(2, 2, 0.5, 2.0)
    train = sample_theta(cfg, rng_seed=1)
    assert perturb(train, 0.0, 5) == train


def test_perturb_stays_in_open_ball():
    cfg = ModelConfig(2, 2, 0.5, 2.0)
    train = sample_theta(cfg, rng_seed=1)
    for seed in range(1000):
        assert np.linalg.norm(pack(perturb(train, 0.1, seed)) - pack(train)) < 0.1


def test_perturb_mean_radius_matches_uniform_ball():
    cfg = ModelConfig(2, 1, 0.5, 2.0)
    train = sample_theta(cfg, rng_seed=1)
    n = cfg.n_params
    radii = np.array([np.linalg.norm(pack(perturb(train, 1.0, s)) - pack(train)) for s in range(10_000)])
    mean = n / (n + 1)
    sd = math.sqrt(n / (n + 2) - mean**2)
    assert abs(radii.mean() - mean) <= 3 * sd / math.sqrt(radii.size)


def test_json_roundtrip():
    train = sample_theta(ModelConfig(3, 2, 0.4, 1.5), rng_seed=3)
    data = json.loads(json.dumps(train.to_dict()))
    assert set(data) == {"k", "d", "epsilon", "R", "amplitudes", "positions"}
    assert SpikeTrain.from_dict(data) == train


def test_sorting_helpers():
    cfg = ModelConfig(3, 1, 0.1, 5.0)
    train = SpikeTrain([3.0, -1.0, 2.0], [[2.0], [0.0], [-1.0]], cfg)
    np.testing.assert_array_equal(sort_by_position(train).positions[:, 0], [-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(sort_by_amplitude(train).amplitudes, [-1.0, 2.0, 3.0])


def test_train_is_immutable():
    train = SpikeTrain([1.0], [[0.0]], ModelConfig(1, 1, 1.0, 1.0))
    with pytest.raises(ValueError):
        train.amplitudes[0] = 2.0
