"""Spike trains, the separated model set and generalized dipoles.

A k-spike train is stored as amplitudes ``a`` (shape ``(k,)``) and positions
``t`` (shape ``(k, d)``). The flat parameter vector is always
``(a_1, ..., a_k, t_1, ..., t_k)`` with positions row-major, which is the
layout every gradient and Hessian in this package uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SamplingExhausted

DEFAULT_SAMPLING_BUDGET = 10**6


@dataclass(frozen=True)
class ModelConfig:
    k: int
    d: int
    epsilon: float
    R: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if self.k >= 2 and not self.epsilon < 2 * self.R:
            raise ValueError("epsilon must be < 2R, otherwise no separated train exists")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "R", float(self.R))

    @property
    def n_params(self) -> int:
        return self.k * (self.d + 1)

    def with_epsilon(self, epsilon: float) -> "ModelConfig":
        return ModelConfig(self.k, self.d, epsilon, self.R)


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    amplitudes: np.ndarray
    positions: np.ndarray
    config: ModelConfig

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=float).reshape(-1)
        t = np.array(self.positions, dtype=float).reshape(-1, self.config.d)
        if a.shape != (self.config.k,) or t.shape != (self.config.k, self.config.d):
            raise ValueError(
                f"expected {self.config.k} amplitudes and {self.config.k}x{self.config.d} "
                f"positions, got {a.shape} and {t.shape}"
            )
        a.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "positions", t)

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def d(self) -> int:
        return self.config.d

    def replace(self, amplitudes=None, positions=None) -> "SpikeTrain":
        return SpikeTrain(
            self.amplitudes if amplitudes is None else amplitudes,
            self.positions if positions is None else positions,
            self.config,
        )

    def to_dict(self) -> dict:
        return {
            "k": self.config.k,
            "d": self.config.d,
            "epsilon": self.config.epsilon,
            "R": self.config.R,
            "amplitudes": self.amplitudes.tolist(),
            "positions": self.positions.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpikeTrain":
        config = ModelConfig(data["k"], data["d"], data["epsilon"], data["R"])
        return cls(np.asarray(data["amplitudes"], float), np.asarray(data["positions"], float), config)

    def __eq__(self, other):
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return (
            self.config == other.config
            and np.array_equal(self.amplitudes, other.amplitudes)
            and np.array_equal(self.positions, other.positions)
        )

    __hash__ = None


@dataclass(frozen=True)
class GeneralizedDipole:
    """The order-1 distribution ``a * delta_t + b * delta'_{t,v}``.

    With ``b == 0`` this is a weighted Dirac and ``v`` is ignored.
    """

    a: float
    b: float
    t: np.ndarray
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.t, dtype=float)).copy()
        if self.v is None:
            v = np.zeros_like(t)
            v[0] = 1.0
        else:
            v = np.atleast_1d(np.asarray(self.v, dtype=float)).copy()
        if v.shape != t.shape:
            raise ValueError("direction and position must have the same dimension")
        if self.b != 0 and abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError(f"derivative direction must be a unit vector (norm {np.linalg.norm(v)})")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    def scaled(self, c: float) -> "GeneralizedDipole":
        return GeneralizedDipole(c * self.a, c * self.b, self.t, self.v)


def dirac(a: float, t) -> GeneralizedDipole:
    return GeneralizedDipole(a, 0.0, t)


def dirac_derivative(b: float, t, v) -> GeneralizedDipole:
    return GeneralizedDipole(0.0, b, t, v)


def train_to_dipoles(spikes: SpikeTrain, sign: float = 1.0) -> list[GeneralizedDipole]:
    """The measure phi(theta) as a list of weighted Diracs."""
    return [dirac(sign * a, t) for a, t in zip(spikes.amplitudes, spikes.positions)]


def pack(spikes: SpikeTrain) -> np.ndarray:
    return np.concatenate([spikes.amplitudes, spikes.positions.reshape(-1)])


def unpack(theta, config: ModelConfig) -> SpikeTrain:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (config.n_params,):
        raise ValueError(f"expected a vector of length {config.n_params}, got shape {theta.shape}")
    k = config.k
    return SpikeTrain(theta[:k].copy(), theta[k:].reshape(k, config.d).copy(), config)


def min_separation(spikes: SpikeTrain) -> float:
    """Smallest pairwise l2 distance between positions (+inf when k == 1)."""
    t = spikes.positions
    if len(t) < 2:
        return math.inf
    diff = t[:, None, :] - t[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(len(t), 1)
    return float(dist[iu].min())


def is_in_theta(spikes: SpikeTrain, strict_interior: bool = False) -> bool:
    """Membership in the separated parameter set.

    Separation is strict (``> epsilon``); the domain ball is closed unless
    ``strict_interior`` asks for ``||t|| < R``.
    """
    cfg = spikes.config
    norms = np.linalg.norm(spikes.positions, axis=1)
    in_ball = bool(np.all(norms < cfg.R)) if strict_interior else bool(np.all(norms <= cfg.R))
    return in_ball and min_separation(spikes) > cfg.epsilon


def uniform_in_ball(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    """``n`` points uniform in the closed d-ball (normalized Gaussian, radius^(1/d))."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    return g * r[:, None]


def sample_theta(
    config: ModelConfig,
    amplitude_range=(1.0, 2.0),
    rng_seed: int = 0,
    *,
    nonvanishing: bool = True,
    random_sign: bool = False,
    strict_interior: bool = False,
    max_attempts: int = DEFAULT_SAMPLING_BUDGET,
) -> SpikeTrain:
    """Draw a separated spike train by rejection sampling of the positions.

    Amplitudes are uniform on ``amplitude_range`` (optionally with a random
    sign). Raises :class:`SamplingExhausted` once ``max_attempts`` candidate
    position sets have been rejected.
    """
    lo, hi = float(amplitude_range[0]), float(amplitude_range[1])
    if hi < lo:
        raise ValueError("amplitude_range must be (low, high) with low <= high")
    if nonvanishing and lo <= 0.0 <= hi:
        raise ValueError("amplitude_range contains 0 but nonvanishing amplitudes were requested")
    rng = np.random.default_rng(rng_seed)
    k, d = config.k, config.d
    radius = config.R
    batch = 4096
    attempts = 0
    while attempts < max_attempts:
        n = min(batch, max_attempts - attempts)
        pts = uniform_in_ball(rng, n * k, d, radius).reshape(n, k, d)
        attempts += n
        if strict_interior:
            ok = np.all(np.linalg.norm(pts, axis=2) < radius, axis=1)
        else:
            ok = np.ones(n, dtype=bool)
        if k >= 2:
            diff = pts[:, :, None, :] - pts[:, None, :, :]
            dist = np.sqrt(np.sum(diff * diff, axis=-1))
            iu = np.triu_indices(k, 1)
            ok &= dist[:, iu[0], iu[1]].min(axis=1) > config.epsilon
        hits = np.flatnonzero(ok)
        if hits.size:
            positions = pts[hits[0]]
            a = rng.uniform(lo, hi, size=k)
            if random_sign:
                a *= rng.choice([-1.0, 1.0], size=k)
            train = SpikeTrain(a, positions, config)
            assert is_in_theta(train, strict_interior)
            return train
    raise SamplingExhausted(
        f"no {config.epsilon}-separated {k}-spike train found in the radius-{radius} "
        f"ball after {max_attempts} attempts"
    )


def perturb(spikes: SpikeTrain, beta: float, rng_seed: int = 0) -> SpikeTrain:
    """Uniform draw from the open parameter ball of radius ``beta`` around ``spikes``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return spikes
    rng = np.random.default_rng(rng_seed)
    theta = pack(spikes)
    n = theta.size
    while True:
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        delta = beta * rng.random() ** (1.0 / n) * u
        if np.linalg.norm(delta) < beta:
            return unpack(theta + delta, spikes.config)


def sort_by_position(spikes: SpikeTrain) -> SpikeTrain:
    """Reorder spikes by increasing position (d = 1) or lexicographically."""
    order = np.lexsort(spikes.positions.T[::-1])
    return SpikeTrain(spikes.amplitudes[order], spikes.positions[order], spikes.config)


def sort_by_amplitude(spikes: SpikeTrain) -> SpikeTrain:
    """Reorder spikes so that ``|a_1| <= ... <= |a_k|``."""
    order = np.argsort(np.abs(spikes.amplitudes), kind="stable")
    return SpikeTrain(spikes.amplitudes[order], spikes.positions[order], spikes.config)
