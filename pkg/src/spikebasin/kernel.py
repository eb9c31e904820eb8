"""Radial kernels and the bilinear kernel calculus on generalized dipoles.

A kernel is ``h(t1, t2) = rho(||t1 - t2||)`` with ``rho(0) = 1``. Everything
here works with ``f(x) = rho(||x||)`` and its directional derivatives
``f'_v = <v, grad f>`` and ``f''_{v,w} = <v, Hess f w>``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, NoValidRadius, QuadratureError
from .spike_model import GeneralizedDipole, ModelConfig

log = logging.getLogger(__name__)

_SMALL_R = 1e-12


@dataclass(frozen=True)
class RadialKernel:
    """Generic C^2 radial profile given by ``rho`` and its two derivatives."""

    rho: Callable
    rho1: Callable
    rho2: Callable
    rho2_at_0: float
    name: str = "radial"

    def __post_init__(self):
        if not self.rho2_at_0 < 0:
            raise ValueError(f"rho''(0) must be negative, got {self.rho2_at_0}")

    @property
    def rho2_abs(self) -> float:
        return abs(self.rho2_at_0)

    def one_minus_rho(self, r):
        return 1.0 - self.rho(r)

    # -- f and its directional derivatives, vectorized over leading axes --
    def f(self, x):
        x = np.asarray(x, dtype=float)
        return self.rho(np.linalg.norm(x, axis=-1))

    def _radial_parts(self, x):
        r = np.linalg.norm(x, axis=-1)
        small = r < _SMALL_R
        rs = np.where(small, 1.0, r)
        # rho'(r)/r -> rho''(0) as r -> 0
        q1 = np.where(small, self.rho2_at_0, self.rho1(rs) / rs)
        # (rho''(r) - rho'(r)/r) / r^2 multiplies <v,x><w,x>, which is O(r^2)
        q2 = np.where(small, 0.0, (self.rho2(rs) - q1) / rs**2)
        return q1, q2

    def df(self, x, v):
        x = np.asarray(x, dtype=float)
        q1, _ = self._radial_parts(x)
        return q1 * np.sum(x * v, axis=-1)

    def d2f(self, x, v, w):
        x = np.asarray(x, dtype=float)
        q1, q2 = self._radial_parts(x)
        return q2 * np.sum(x * v, axis=-1) * np.sum(x * w, axis=-1) + q1 * np.sum(v * w, axis=-1)


@dataclass(frozen=True)
class GaussianKernel(RadialKernel):
    sigma: float = 1.0

    def one_minus_rho(self, r):
        return -np.expm1(-np.square(r) / (2.0 * self.sigma**2))

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-np.sum(x * x, axis=-1) / (2.0 * self.sigma**2))

    def df(self, x, v):
        x = np.asarray(x, dtype=float)
        return -(np.sum(v * x, axis=-1) / self.sigma**2) * self.f(x)

    def d2f(self, x, v, w):
        x = np.asarray(x, dtype=float)
        s2 = self.sigma**2
        vx = np.sum(v * x, axis=-1)
        wx = np.sum(w * x, axis=-1)
        return (vx * wx / s2**2 - np.sum(v * w, axis=-1) / s2) * self.f(x)


def gaussian_kernel(sigma: float) -> GaussianKernel:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    s2 = float(sigma) ** 2

    def rho(u):
        return np.exp(-np.square(u) / (2 * s2))

    def rho1(u):
        return -(np.asarray(u) / s2) * rho(u)

    def rho2(u):
        u = np.asarray(u)
        return (np.square(u) / s2**2 - 1 / s2) * rho(u)

    return GaussianKernel(rho, rho1, rho2, -1.0 / s2, name=f"gaussian(sigma={sigma:g})", sigma=float(sigma))


def sigma_from_k(k: int) -> float:
    """Gaussian width making the kernel k-coherent at unit separation.

    ``sigma_k^2 = 1 / (2.4 ln(2k - 1) + 24)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.sqrt(1.0 / (2.4 * math.log(2 * k - 1) + 24.0))


def coherence_bound(k: int) -> float:
    """Coherence ``3 / (4(k - 1))`` of the sigma_k Gaussian at unit separation."""
    if k < 2:
        raise ValueError("the coherence bound needs k >= 2")
    return 3.0 / (4.0 * (k - 1))


def closed_form_coherence_for(kernel: RadialKernel, k: int, separation: float) -> float | None:
    """The closed-form coherence bound when it applies, else None.

    It applies to a Gaussian whose width equals ``separation * sigma_k``
    (positions rescaled to unit separation).
    """
    if k < 2 or not isinstance(kernel, GaussianKernel):
        return None
    if math.isclose(kernel.sigma / separation, sigma_from_k(k), rel_tol=1e-12):
        return coherence_bound(k)
    return None


# ---------------------------------------------------------------------------
# Dipole calculus
# ---------------------------------------------------------------------------


def dipole_inner(nu1: GeneralizedDipole, nu2: GeneralizedDipole, kernel: RadialKernel) -> float:
    """Kernel inner product of two generalized dipoles (closed-form limit)."""
    delta = nu1.t - nu2.t
    val = nu1.a * nu2.a * kernel.f(delta)
    if nu1.b:
        val -= nu2.a * nu1.b * kernel.df(delta, nu1.v)
    if nu2.b:
        val -= nu1.a * nu2.b * kernel.df(-delta, nu2.v)
    if nu1.b and nu2.b:
        val -= nu1.b * nu2.b * kernel.d2f(delta, nu1.v, nu2.v)
    return float(val)


def _as_arrays(dipoles: Sequence[GeneralizedDipole]):
    a = np.array([nu.a for nu in dipoles])
    b = np.array([nu.b for nu in dipoles])
    t = np.array([nu.t for nu in dipoles])
    v = np.array([nu.v for nu in dipoles])
    return a, b, t, v


def gram_matrix(dipoles: Sequence[GeneralizedDipole], kernel: RadialKernel) -> np.ndarray:
    """Matrix of pairwise inner products, vectorized over all pairs."""
    a, b, t, v = _as_arrays(dipoles)
    delta = t[:, None, :] - t[None, :, :]
    vi = v[:, None, :]
    vj = v[None, :, :]
    gram = np.outer(a, a) * kernel.f(delta)
    gram -= np.outer(a, b).T * kernel.df(delta, vi)
    gram -= np.outer(a, b) * kernel.df(-delta, vj)
    gram -= np.outer(b, b) * kernel.d2f(delta, vi, vj)
    return gram


def measure_norm_sq(dipoles: Sequence[GeneralizedDipole], kernel: RadialKernel) -> float:
    """Squared kernel norm of a finite sum of generalized dipoles (may be -0 by rounding)."""
    if not dipoles:
        raise ValueError("empty measure")
    return float(np.sum(gram_matrix(dipoles, kernel)))


def measure_norm_h(dipoles: Sequence[GeneralizedDipole], kernel: RadialKernel) -> float:
    sq = measure_norm_sq(dipoles, kernel)
    if sq < 0:
        if sq < -1e-10 * max(1.0, _diag_mass(dipoles, kernel)):
            warnings.warn(f"kernel norm squared is negative ({sq:.3e}); clamped to 0", RuntimeWarning)
        sq = 0.0
    return math.sqrt(sq)


def _diag_mass(dipoles, kernel):
    return sum(nu.a**2 + nu.b**2 * kernel.rho2_abs for nu in dipoles)


def measure_inner(mu1: Sequence[GeneralizedDipole], mu2: Sequence[GeneralizedDipole], kernel) -> float:
    return float(sum(dipole_inner(x, y, kernel) for x in mu1 for y in mu2))


def finite_dipole(nu: GeneralizedDipole, eta: float) -> list[GeneralizedDipole]:
    """Dirac-only approximation ``a d_t - b (d_{t + eta v} - d_t) / eta``."""
    atoms = [GeneralizedDipole(nu.a + nu.b / eta, 0.0, nu.t)]
    if nu.b:
        atoms.append(GeneralizedDipole(-nu.b / eta, 0.0, nu.t + eta * nu.v))
    return atoms


# ---------------------------------------------------------------------------
# Derived constants
# ---------------------------------------------------------------------------


def c_h_compute(kernel: RadialKernel, epsilon: float, q: float = 0.5, grid_points: int = 10_000) -> float:
    """Largest ``c <= epsilon/2`` with ``rho(t) <= 1 - q |rho''(0)| t^2 / 2`` on ``[0, c]``.

    The inequality is scanned on a uniform grid of ``grid_points`` cells and
    the first violation is refined by bisection. Failure at the first grid
    point raises :class:`NoValidRadius`.
    """
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    c_max = epsilon / 2.0
    half_curv = q * kernel.rho2_abs / 2.0

    def slack(t):
        # >= 0 where the inequality holds; written as 1 - rho to avoid cancellation
        return kernel.one_minus_rho(t) - half_curv * np.square(t)

    grid = c_max * np.arange(1, grid_points + 1) / grid_points
    s = slack(grid)
    bad = np.flatnonzero(s < 0)
    if bad.size == 0:
        return c_max
    j = int(bad[0])
    if j == 0:
        raise NoValidRadius(
            f"{kernel.name}: rho(t) <= 1 - {q}*|rho''(0)|t^2/2 fails already at t={grid[0]:.3e}"
        )
    lo, hi = float(grid[j - 1]), float(grid[j])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if slack(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def _random_unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_generalized_dipole(rng: np.random.Generator, anchor, epsilon: float, d: int) -> list[GeneralizedDipole]:
    """A random generalized dipole whose support starts at ``anchor``.

    Half the draws are Dirac pairs ``a1 d_t1 - a2 d_t2`` with
    ``||t1 - t2|| <= epsilon``; the rest are ``a d_t + b d'_{t,v}``.
    """
    anchor = np.asarray(anchor, dtype=float)
    if rng.random() < 0.5:
        other = anchor + epsilon * rng.random() * _random_unit(rng, d)
        a1, a2 = rng.standard_normal(2)
        return [GeneralizedDipole(a1, 0.0, anchor), GeneralizedDipole(-a2, 0.0, other)]
    a, b = rng.standard_normal(2)
    return [GeneralizedDipole(a, b, anchor, _random_unit(rng, d))]


def support(nu: Sequence[GeneralizedDipole]) -> np.ndarray:
    return np.array([atom.t for atom in nu])


def supports_separated(nu1, nu2, epsilon: float) -> bool:
    s1, s2 = support(nu1), support(nu2)
    dist = np.linalg.norm(s1[:, None, :] - s2[None, :, :], axis=-1)
    return bool(np.all(dist > epsilon))


def sample_separated_collection(
    rng: np.random.Generator, count: int, epsilon: float, d: int, region_radius: float, max_attempts: int = 100_000
) -> list[list[GeneralizedDipole]]:
    """``count`` pairwise epsilon-separated generalized dipoles inside a ball."""
    out: list[list[GeneralizedDipole]] = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError("could not place separated generalized dipoles; enlarge the region")
        g = rng.standard_normal(d)
        anchor = g / np.linalg.norm(g) * region_radius * rng.random() ** (1.0 / d)
        nu = random_generalized_dipole(rng, anchor, epsilon, d)
        if all(supports_separated(nu, other, epsilon) for other in out):
            out.append(nu)
    return out


def normalized_inner(nu1, nu2, kernel) -> float:
    n1 = measure_norm_h(nu1, kernel)
    n2 = measure_norm_h(nu2, kernel)
    if n1 == 0 or n2 == 0:
        return 0.0
    return abs(measure_inner(nu1, nu2, kernel)) / (n1 * n2)


def pairwise_coherence(collection: Sequence[Sequence[GeneralizedDipole]], kernel) -> float:
    """Max normalized |inner product| over distinct pairs of a collection."""
    best = 0.0
    for i in range(len(collection)):
        for j in range(i + 1, len(collection)):
            best = max(best, normalized_inner(collection[i], collection[j], kernel))
    return best


def coherence_estimate(kernel: RadialKernel, config: ModelConfig, trials: int, rng_seed: int = 0,
                       separation: float | None = None) -> float:
    """Empirical lower bound on the mutual coherence of separated generalized dipoles.

    Each trial draws a dipole, then a second one whose support starts just
    beyond the separation distance from a random support point of the first.
    The kernel is translation invariant, so the domain radius plays no role.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    eps = config.epsilon if separation is None else separation
    d = config.d
    seeds = np.random.SeedSequence(rng_seed).spawn(trials)
    best = 0.0
    for ss in seeds:
        rng = np.random.default_rng(ss)
        nu1 = random_generalized_dipole(rng, np.zeros(d), eps, d)
        s1 = support(nu1)
        while True:
            base = s1[rng.integers(len(s1))]
            start = base + eps * (1.0 + abs(0.25 * rng.standard_normal())) * _random_unit(rng, d)
            nu2 = random_generalized_dipole(rng, start, eps, d)
            if supports_separated(nu1, nu2, eps):
                break
        best = max(best, normalized_inner(nu1, nu2, kernel))
    return best


# ---------------------------------------------------------------------------
# Kernels built by autocorrelation of a convolution profile (d = 1)
# ---------------------------------------------------------------------------


def _quad(fun, lo, hi, what):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(fun, lo, hi, epsabs=1e-14, epsrel=1e-10, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature for {what} did not converge: {exc}") from exc
    return val


@dataclass(frozen=True)
class ConvolutionKernel(RadialKernel):
    """``rho = (K * K) / scale`` for an even profile K; ``scale = (K * K)(0)``."""

    scale: float = 1.0
    support_radius: float = math.inf
    profile: Callable = field(default=None, repr=False)


def _fd_derivative(fun, step):
    def d1(s):
        return (fun(s + step) - fun(s - step)) / (2 * step)

    return d1


def kernel_from_convolution(K: Callable, support_radius: float, dK: Callable | None = None,
                            d2K: Callable | None = None, name: str = "convolution") -> ConvolutionKernel:
    """Kernel whose profile is the normalized autocorrelation of ``K``.

    ``K`` must be even and (numerically) supported in ``[-support_radius,
    support_radius]``. Derivatives of ``K`` fall back to central differences
    when not supplied.
    """
    S = float(support_radius)
    if dK is None:
        dK = _fd_derivative(K, 1e-4 * S)
    if d2K is None:
        d2K = _fd_derivative(dK, 1e-4 * S)

    def corr(g, u):
        u = abs(float(u))
        lo, hi = -S, S - u
        if hi <= lo:
            return 0.0
        return _quad(lambda s: K(s) * g(s + u), lo, hi, "autocorrelation")

    scale = corr(K, 0.0)
    if not scale > 0:
        raise ValueError("profile has zero energy")

    def rho(u):
        return np.vectorize(lambda x: corr(K, x) / scale, otypes=[float])(u)

    def rho1(u):
        # rho is even: rho'(|u|) with the sign of u folded back by the radial formulas
        return np.vectorize(lambda x: corr(dK, abs(x)) / scale, otypes=[float])(u)

    def rho2(u):
        return np.vectorize(lambda x: corr(d2K, abs(x)) / scale, otypes=[float])(u)

    rho2_0 = corr(d2K, 0.0) / scale
    return ConvolutionKernel(rho, rho1, rho2, float(rho2_0), name=name, scale=scale, support_radius=S, profile=K)


def gaussian_profile(width: float):
    """Even profile ``exp(-s^2 / (2 w^2))`` with its first two derivatives."""
    w2 = width**2

    def K(s):
        return math.exp(-s * s / (2 * w2))

    def dK(s):
        return -s / w2 * K(s)

    def d2K(s):
        return (s * s / w2**2 - 1 / w2) * K(s)

    return K, dK, d2K


def convolved_l2_norm_sq(K: Callable, atoms: Sequence[GeneralizedDipole], support_radius: float) -> float:
    """``||K * x||_{L2}^2`` for a Dirac sum in d = 1, by direct quadrature."""
    ts = np.array([float(nu.t[0]) for nu in atoms])
    a = np.array([nu.a for nu in atoms])

    def conv(s):
        return sum(ai * K(s - ti) for ai, ti in zip(a, ts))

    lo, hi = ts.min() - support_radius, ts.max() + support_radius
    knots = np.unique(np.concatenate([[lo, hi], ts]))
    return sum(_quad(lambda s: conv(s) ** 2, x0, x1, "||K*x||^2") for x0, x1 in zip(knots[:-1], knots[1:]))


def dirac_bilinear_norm_sq(kernel: ConvolutionKernel, atoms: Sequence[GeneralizedDipole]) -> float:
    """Unnormalized ``sum_ij a_i a_j (K*K)(t_i - t_j)``."""
    return kernel.scale * measure_norm_sq(atoms, kernel)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


def kernel_from_spec(spec: dict, config: ModelConfig) -> RadialKernel:
    kind = spec.get("type")
    if kind == "gaussian":
        if "sigma" not in spec:
            raise ConfigError("gaussian kernel needs 'sigma'")
        return gaussian_kernel(float(spec["sigma"]))
    if kind == "gaussian_auto_k":
        # sigma_k is stated for unit separation; positions are rescaled by 1/epsilon
        sigma = config.epsilon * sigma_from_k(config.k)
        log.info("gaussian_auto_k: sigma = epsilon * sigma_k = %.6g", sigma)
        return gaussian_kernel(sigma)
    if kind == "convolution":
        if config.d != 1:
            raise ConfigError("convolution kernels are only available for d = 1")
        if spec.get("profile", "gaussian") != "gaussian":
            raise ConfigError(f"unknown convolution profile {spec.get('profile')!r}")
        width = float(spec["width"])
        K, dK, d2K = gaussian_profile(width)
        return kernel_from_convolution(K, 12 * width, dK, d2K, name=f"convolution(gaussian,{width:g})")
    raise ConfigError(f"unknown kernel type {kind!r}")
