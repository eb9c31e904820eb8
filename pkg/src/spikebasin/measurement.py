"""Weighted Fourier measurements of Diracs and Dirac derivatives.

``(A u)_l = (1/sqrt(m)) * integral c_l exp(-i <w_l, t>) du(t)``. Applied to a
first derivative ``delta'_{t,v}`` this gives ``i <w_l, v> alpha_l(t)`` and to a
second derivative ``delta''_{t,v1,v2}`` it gives
``-<w_l, v1><w_l, v2> alpha_l(t)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllSamplesDegenerate
from .kernel import GaussianKernel, RadialKernel, measure_norm_sq
from .spike_model import (
    GeneralizedDipole,
    ModelConfig,
    SpikeTrain,
    is_in_theta,
    sample_theta,
    train_to_dipoles,
)


def _check_unit(v, name="direction"):
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError(f"{name} must be a unit vector (norm {np.linalg.norm(v)})")


def re_inner(x: np.ndarray, y: np.ndarray) -> float:
    """``Re <x, y> = Re sum x_l conj(y_l)``, pairwise-summed over l."""
    return float(np.sum(x.real * y.real + x.imag * y.imag))


@dataclass(frozen=True, eq=False)
class FourierOperator:
    frequencies: np.ndarray
    weights: np.ndarray
    normalized: bool = True
    seed: int | None = None

    def __post_init__(self):
        w = np.array(self.frequencies, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        c = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] < 1 or c.shape != (w.shape[0],):
            raise ValueError("need m >= 1 frequencies and one weight per frequency")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(c))):
            raise ValueError("frequencies and weights must be finite")
        w.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "weights", c)

    @property
    def m(self) -> int:
        return self.frequencies.shape[0]

    @property
    def d(self) -> int:
        return self.frequencies.shape[1]

    @property
    def amplitude_scale(self) -> np.ndarray:
        return self.weights / math.sqrt(self.m) if self.normalized else self.weights

    def alpha(self, t) -> np.ndarray:
        """``alpha_l(t)`` for one point (shape ``(m,)``) or many (shape ``(n, m)``)."""
        t = np.asarray(t, dtype=float)
        phase = t @ self.frequencies.T
        return self.amplitude_scale * np.exp(-1j * phase)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "d": self.d,
            "frequencies": self.frequencies.tolist(),
            "weights": self.weights.tolist(),
            "normalized": self.normalized,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FourierOperator":
        freqs = np.asarray(data["frequencies"], dtype=float).reshape(int(data["m"]), int(data["d"]))
        return cls(freqs, np.asarray(data["weights"], dtype=float), bool(data.get("normalized", True)),
                   data.get("seed"))


def draw_random_operator(m: int, kernel: GaussianKernel, d: int, rng_seed: int = 0) -> FourierOperator:
    """Random Fourier sampling matched to a Gaussian kernel.

    Frequencies are i.i.d. N(0, sigma^-2 I) with unit weights, so that
    ``E ||A x||^2 = ||x||_h^2``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    sigma = getattr(kernel, "sigma", None)
    if sigma is None or not sigma > 0:
        raise ValueError("random operators are drawn for Gaussian kernels")
    rng = np.random.default_rng(rng_seed)
    freqs = rng.standard_normal((m, d)) / sigma
    return FourierOperator(freqs, np.ones(m), True, rng_seed)


def grid_operator(max_frequency: int, weights=None, base: float = 2 * math.pi) -> FourierOperator:
    """Regular d = 1 sampling at ``base * l`` for ``l = -max_frequency .. max_frequency``.

    No RIP claim comes with this operator.
    """
    ls = np.arange(-max_frequency, max_frequency + 1, dtype=float)
    c = np.ones_like(ls) if weights is None else np.asarray(weights, dtype=float)
    return FourierOperator(base * ls[:, None], c, True, None)


def apply(op: FourierOperator, spikes: SpikeTrain) -> np.ndarray:
    """Measurements ``sum_i a_i alpha(t_i)`` of a spike train."""
    norms = np.linalg.norm(spikes.positions, axis=1)
    if np.any(norms > spikes.config.R):
        warnings.warn("spike positions outside the domain ball", RuntimeWarning, stacklevel=2)
    return spikes.amplitudes @ op.alpha(spikes.positions)


def apply_dirac_derivative(op: FourierOperator, t, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    _check_unit(v)
    return 1j * (op.frequencies @ v) * op.alpha(t)


def apply_dirac_second_derivative(op: FourierOperator, t, v1, v2) -> np.ndarray:
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    _check_unit(v1, "v1")
    _check_unit(v2, "v2")
    return -(op.frequencies @ v1) * (op.frequencies @ v2) * op.alpha(t)


def apply_dipoles(op: FourierOperator, dipoles: Sequence[GeneralizedDipole]) -> np.ndarray:
    """Measurements of a finite sum of generalized dipoles."""
    t = np.array([nu.t for nu in dipoles])
    v = np.array([nu.v for nu in dipoles])
    a = np.array([nu.a for nu in dipoles])
    b = np.array([nu.b for nu in dipoles])
    coef = a[:, None] + 1j * b[:, None] * (v @ op.frequencies.T)
    return np.sum(coef * op.alpha(t), axis=0)


def compute_D_A_R(op: FourierOperator) -> float:
    """Sup of the directional second derivatives of the ``alpha_l``.

    For Fourier atoms this is ``max_l |c_l| ||w_l||^2`` (divided by sqrt(m)
    when normalized), independent of the domain.
    """
    return float(np.max(np.abs(op.amplitude_scale) * np.sum(op.frequencies**2, axis=1)))


@dataclass(frozen=True)
class RipEstimate:
    gamma_lower: float
    ratio_min: float
    ratio_max: float
    trials: int
    seed: int | None
    used: int = 0

    def to_dict(self) -> dict:
        return dict(gamma_lower=self.gamma_lower, ratio_min=self.ratio_min, ratio_max=self.ratio_max,
                    trials=self.trials, seed=self.seed, used=self.used)


def rip_from_samples(op: FourierOperator, kernel: RadialKernel, samples, trials=None, seed=None,
                     min_norm_sq: float = 1e-12) -> RipEstimate:
    """Extreme ratios ``||A x||^2 / ||x||_h^2`` over the given measures."""
    lo, hi = math.inf, -math.inf
    used = 0
    count = 0
    for x in samples:
        count += 1
        nh = measure_norm_sq(x, kernel)
        if nh < min_norm_sq:
            continue
        y = apply_dipoles(op, x)
        r = re_inner(y, y) / nh
        lo, hi = min(lo, r), max(hi, r)
        used += 1
    if used == 0:
        raise AllSamplesDegenerate("every sampled measure had negligible kernel norm")
    gamma = max(1.0 - lo, hi - 1.0, 0.0)
    return RipEstimate(gamma, lo, hi, count if trials is None else trials, seed, used)


def _secant_sample(rng, config: ModelConfig, amplitude_range):
    s1 = int(rng.integers(2**63 - 1))
    th1 = sample_theta(config, amplitude_range, s1, nonvanishing=False, random_sign=True)
    if rng.random() < 0.5:
        # nearby second train: probes the dipole-like part of the secant set
        scale = config.epsilon * 10 ** rng.uniform(-3, 0)
        for _ in range(20):
            pos = th1.positions + scale * rng.standard_normal(th1.positions.shape)
            amp = th1.amplitudes + scale * rng.standard_normal(config.k)
            th2 = SpikeTrain(amp, pos, config)
            if is_in_theta(th2):
                break
        else:
            th2 = sample_theta(config, amplitude_range, int(rng.integers(2**63 - 1)), nonvanishing=False,
                               random_sign=True)
    else:
        th2 = sample_theta(config, amplitude_range, int(rng.integers(2**63 - 1)), nonvanishing=False,
                           random_sign=True)
    return train_to_dipoles(th1) + train_to_dipoles(th2, sign=-1.0)


def _dipole_sum_sample(rng, config: ModelConfig, amplitude_range):
    th = sample_theta(config, amplitude_range, int(rng.integers(2**63 - 1)), nonvanishing=False,
                      random_sign=True)
    out = []
    for a, t in zip(th.amplitudes, th.positions):
        v = rng.standard_normal(config.d)
        v /= np.linalg.norm(v)
        out.append(GeneralizedDipole(a, float(rng.standard_normal()) * max(abs(a), 1.0), t, v))
    return out


def estimate_rip(op: FourierOperator, config: ModelConfig, kernel: RadialKernel, trials: int,
                 rng_seed: int = 0, include_derivatives: bool = False,
                 amplitude_range=(0.0, 1.0)) -> RipEstimate:
    """Empirical (optimistic) RIP constant on the separated secant set.

    Half of the secant samples pair a train with a small perturbation of
    itself so that near-dipole differences are represented. With
    ``include_derivatives`` the samples are sums of separated
    ``a d_t + b d'_{t,v}`` terms instead.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = np.random.SeedSequence(rng_seed).spawn(trials)
    draw = _dipole_sum_sample if include_derivatives else _secant_sample
    samples = (draw(np.random.default_rng(ss), config, amplitude_range) for ss in seeds)
    return rip_from_samples(op, kernel, samples, trials=trials, seed=rng_seed)
