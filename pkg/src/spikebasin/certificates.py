"""Hessian eigenvalue bounds, conditioning bounds and basin-of-attraction radii.

All bounds take the RIP constant ``gamma`` and coherence ``mu`` as inputs;
:func:`estimate_constants` produces (inflated) empirical values for them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BetaTooLarge, NoiseBudgetExceeded, NotSymmetric, VacuousCertificate, ZeroAmplitude
from .kernel import RadialKernel, c_h_compute, coherence_estimate, closed_form_coherence_for
from .measurement import FourierOperator, estimate_rip
from .objective import Objective
from .spike_model import ModelConfig, SpikeTrain, pack, unpack

log = logging.getLogger(__name__)

PROVENANCES = ("empirical", "paper_bound", "user")


@dataclass(frozen=True)
class RipConstants:
    gamma: float
    mu: float
    provenance: str = "user"
    raw_gamma: float | None = None
    raw_mu: float | None = None
    notes: tuple = ()

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def coherence_sum(self, k: int) -> float:
        return (k - 1) * self.mu

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        return d


@dataclass(frozen=True)
class HessianBounds:
    lambda_max_ub: float
    lambda_min_lb: float
    xi: float
    vacuous: bool = False

    def interval(self, widen: float = 0.0) -> tuple[float, float]:
        w = self.lambda_max_ub - self.lambda_min_lb
        return self.lambda_min_lb - widen * w, self.lambda_max_ub + widen * w


@dataclass(frozen=True)
class BasinCertificate:
    beta_max: float
    C1: float
    C2_or_C3: float
    c_h_used: float
    q_relaxation: float | None
    L: float
    tau_max: float
    lambda_min_lb: float
    gamma: float
    mu: float
    noisy: bool
    noise_budget: float | None = None
    noise_norm: float = 0.0
    vacuous: bool = False
    assumptions_log: tuple = ()
    provenance: str = "user"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["assumptions_log"] = "\n".join(self.assumptions_log)
        return d


def _amplitude_extremes(theta: SpikeTrain):
    abs_a = np.abs(theta.amplitudes)
    return float(abs_a.min()), float(abs_a.max())


def xi_bound(theta: SpikeTrain, residual_gap: float, noise_norm: float, D: float, m: int,
             rip: RipConstants, kernel: RadialKernel) -> float:
    """Perturbation radius of the residual-coupled Hessian part.

    ``2(d+1) max(max|a_r| sqrt(m) D, sqrt(1+gamma) sqrt|rho''(0)|) (gap + ||e||)``.
    """
    if residual_gap < 0 or noise_norm < 0:
        raise ValueError("residual gap and noise norm must be nonnegative")
    d = theta.config.d
    _, a_max = _amplitude_extremes(theta)
    M = max(a_max * math.sqrt(m) * D, math.sqrt(1 + rip.gamma) * math.sqrt(kernel.rho2_abs))
    return 2.0 * (d + 1) * M * (residual_gap + noise_norm)


def _curvature_factors(rip: RipConstants, k: int):
    kmu = rip.coherence_sum(k)
    upper = 2.0 * (1 + rip.gamma) * (1 + kmu)
    lower = 2.0 * (1 - rip.gamma) * (1 - kmu)
    vacuous = kmu >= 1 or rip.gamma >= 1
    return upper, lower, vacuous


def eigen_bounds_at(theta: SpikeTrain, rip: RipConstants, kernel: RadialKernel, xi: float) -> HessianBounds:
    """Bounds on the extreme Hessian eigenvalues at a separated parameter."""
    a2 = theta.amplitudes**2 * kernel.rho2_abs
    upper, lower, vacuous = _curvature_factors(rip, theta.k)
    ub = upper * max(1.0, float(a2.max())) + xi
    lb = lower * min(1.0, float(a2.min())) - xi
    return HessianBounds(ub, lb, xi, vacuous)


def conditioning_bounds(theta: SpikeTrain, rip: RipConstants, kernel: RadialKernel) -> tuple[float, float]:
    """Interval containing the Hessian condition number at a noiseless minimum."""
    a_min, _ = _amplitude_extremes(theta)
    if a_min == 0:
        raise ZeroAmplitude("conditioning bounds need min_r |a_r| > 0")
    a2 = theta.amplitudes**2 * kernel.rho2_abs
    big, small = max(1.0, float(a2.max())), min(1.0, float(a2.min()))
    g = rip.gamma
    kmu = rip.coherence_sum(theta.k)
    lo = (1 - g) * big / ((1 + g) * small)
    den = (1 - g) * (1 - kmu) * small
    hi = (1 + g) * (1 + kmu) * big / den if den > 0 else math.inf
    return lo, hi


def uniform_bounds_on_ball(theta_star: SpikeTrain, beta: float, rip: RipConstants, kernel: RadialKernel,
                           sup_residual_gap: float, noise_norm: float, constrained: bool, D: float,
                           m: int) -> HessianBounds:
    """Eigenvalue bounds valid on the whole ball of radius ``beta`` around ``theta_star``.

    Unconstrained mode needs ``beta <= epsilon/4`` (and the constants measured
    at separation epsilon/2); constrained mode covers separated points only.
    """
    a_min, a_max = _amplitude_extremes(theta_star)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if not constrained and beta > theta_star.config.epsilon / 4:
        raise BetaTooLarge(f"beta={beta} exceeds epsilon/4={theta_star.config.epsilon / 4}")
    if beta > 0 and beta >= a_min:
        raise BetaTooLarge(f"beta={beta} is not below the smallest amplitude {a_min}")
    upper, lower, vacuous = _curvature_factors(rip, theta_star.k)
    rho2 = kernel.rho2_abs
    xi = xi_bound(theta_star, sup_residual_gap, noise_norm, D, m, rip, kernel)
    ub = upper * max(1.0, (a_max + beta) ** 2 * rho2) + xi
    lb = lower * min(1.0, (a_min - beta) ** 2 * rho2) - xi
    return HessianBounds(ub, lb, xi, vacuous)


@dataclass(frozen=True)
class GapEstimate:
    empirical: float
    analytic: float | None
    value: float
    exceeded: bool


def analytic_gap_bound(theta_star: SpikeTrain, beta: float, rip: RipConstants, kernel: RadialKernel) -> float:
    """``sqrt(1+gamma) sqrt(1+(k-1)mu) beta sqrt(1 + 2|rho''(0)| ||a*||^2)``."""
    s = math.sqrt(1 + 2 * kernel.rho2_abs * float(np.sum(theta_star.amplitudes**2)))
    return math.sqrt(1 + rip.gamma) * math.sqrt(1 + rip.coherence_sum(theta_star.k)) * beta * s


def sup_residual_gap_estimate(obj: Objective, theta_star: SpikeTrain, beta: float, samples: int,
                              rng_seed: int = 0, rip: RipConstants | None = None,
                              kernel: RadialKernel | None = None) -> GapEstimate:
    """Sampled sup of ``||A phi(theta) - A phi(theta*)||`` over the closed ball.

    Half of the probes sit on the boundary sphere. When ``rip`` and
    ``kernel`` are given the analytic bound is computed too and used as the
    value unless a sample exceeds it (then the sample max is used and the
    estimate is flagged).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    center = pack(theta_star)
    base = obj.operator
    y0 = base.alpha(theta_star.positions).T @ theta_star.amplitudes
    emp = 0.0
    if beta > 0:
        n = center.size
        for i in range(samples):
            u = rng.standard_normal(n)
            u /= np.linalg.norm(u)
            radius = beta if i % 2 == 0 else beta * rng.random() ** (1.0 / n)
            th = unpack(center + radius * u, theta_star.config)
            diff = base.alpha(th.positions).T @ th.amplitudes - y0
            emp = max(emp, float(np.sqrt(np.sum(diff.real**2 + diff.imag**2))))
    analytic = None
    if rip is not None and kernel is not None:
        analytic = analytic_gap_bound(theta_star, beta, rip, kernel)
    if analytic is None:
        return GapEstimate(emp, None, emp, False)
    exceeded = emp > analytic
    if exceeded:
        log.warning("sampled residual gap %.3e exceeds the analytic bound %.3e", emp, analytic)
    return GapEstimate(emp, analytic, max(emp, analytic), exceeded)


def _resolve_c_h(kernel, config, c_h, q, notes):
    if c_h is None:
        c_h = c_h_compute(kernel, config.epsilon, q)
        notes.append(f"c_h computed with relaxation q={q}: {c_h:.6g}")
    else:
        notes.append(f"c_h supplied: {c_h:.6g}")
        q = None
    return float(c_h), q


def _basin(theta_star, rip, kernel, D, m, noise_norm, noisy, c_h, q, allow_vacuous):
    notes = list(rip.notes)
    theta_star_abs = np.abs(theta_star.amplitudes)
    a1, ak = float(theta_star_abs.min()), float(theta_star_abs.max())
    if a1 == 0:
        raise ZeroAmplitude("basin radii need min_r |a_r| > 0")
    k, d = theta_star.k, theta_star.config.d
    rho2 = kernel.rho2_abs
    g = rip.gamma
    kmu = rip.coherence_sum(k)
    c_h, q = _resolve_c_h(kernel, theta_star.config, c_h, q, notes)

    C1 = (1 - g) * (1 - kmu) / ((d + 1) * math.sqrt(1 + g) * math.sqrt(1 + kmu))
    M = max(ak * math.sqrt(m) * D, math.sqrt(1 + g) * math.sqrt(rho2))
    S = math.sqrt(1 + 2 * rho2 * float(np.sum(theta_star_abs**2)))
    top = min(1.0, a1**2 * rho2 / 4)
    C = top / (M * (1 + S)) if noisy else top / (M * S)
    beta = min(c_h, a1 / 2, C1 * C)

    budget = math.sqrt(1 + g) * math.sqrt(1 + kmu) * beta if noisy else None
    gap = math.sqrt(1 + g) * math.sqrt(1 + kmu) * max(beta, 0.0) * S
    xi = 2.0 * (d + 1) * M * (gap + noise_norm)
    L = 2 * (1 + g) * (1 + kmu) * max(1.0, (ak + max(beta, 0.0)) ** 2 * rho2) + xi
    first = 2 * (1 - g) * (1 - kmu) * min(1.0, (a1 - max(beta, 0.0)) ** 2 * rho2)
    lower = first - xi

    if beta > theta_star.config.epsilon / 4:
        notes.append(f"beta_max={beta:.6g} exceeds epsilon/4; the unconstrained ball bound assumes beta <= epsilon/4")
    if kmu >= 1 or g >= 1:
        notes.append(f"vacuous: (k-1)mu={kmu:.4g}, gamma={g:.4g}")
    # at beta = C1*C the construction makes the lower bound exactly 0 when min(1, .) saturates
    vacuous = beta <= 0 or lower < -1e-12 * max(abs(first), 1.0)
    if lower < 0 and not vacuous:
        notes.append(f"curvature lower bound {lower:.3e} is zero up to rounding")
    cert = BasinCertificate(
        beta_max=float(beta), C1=float(C1), C2_or_C3=float(C), c_h_used=c_h, q_relaxation=q, L=float(L),
        tau_max=float(1.0 / L), lambda_min_lb=float(lower), gamma=g, mu=rip.mu, noisy=noisy,
        noise_budget=None if budget is None else float(budget), noise_norm=float(noise_norm),
        vacuous=bool(vacuous), assumptions_log=tuple(notes), provenance=rip.provenance,
    )
    if vacuous and not allow_vacuous:
        raise VacuousCertificate(
            f"no certified basin: beta_max={beta:.3e}, curvature lower bound={lower:.3e}", cert)
    return cert


def beta_max_noiseless(theta_star: SpikeTrain, rip: RipConstants, kernel: RadialKernel, D: float, m: int, *,
                       c_h: float | None = None, q: float = 0.5, allow_vacuous: bool = False) -> BasinCertificate:
    """Certified basin radius ``min(c_h, |a_1|/2, C1 C2)`` for noiseless data."""
    return _basin(theta_star, rip, kernel, D, m, 0.0, False, c_h, q, allow_vacuous)


def beta_max_noisy(theta_star: SpikeTrain, rip: RipConstants, kernel: RadialKernel, D: float, m: int,
                   noise_norm: float, *, c_h: float | None = None, q: float = 0.5,
                   allow_vacuous: bool = False) -> BasinCertificate:
    """Certified basin radius ``min(c_h, |a_1|/2, C1 C3)`` under bounded noise.

    Raises :class:`NoiseBudgetExceeded` when
    ``||e|| > sqrt(1+gamma) sqrt(1+(k-1)mu) beta_max``.
    """
    if noise_norm < 0:
        raise ValueError("noise_norm must be nonnegative")
    cert = _basin(theta_star, rip, kernel, D, m, noise_norm, True, c_h, q, allow_vacuous)
    if noise_norm > cert.noise_budget:
        raise NoiseBudgetExceeded(f"noise norm {noise_norm:.3e} exceeds the budget {cert.noise_budget:.3e}")
    return cert


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------


def inflate_constants(gamma_hat: float, mu_hat: float, k: int, closed_mu: float | None = None,
                      factor: float = 1.25) -> RipConstants:
    """Safety-inflated constants from empirical estimates.

    ``gamma <- min(1, factor * gamma_hat)``; ``mu <- max(factor * mu_hat, closed-form bound)``
    when a closed-form coherence bound applies.
    """
    gamma = min(1.0, factor * gamma_hat)
    mu = factor * mu_hat
    notes = [f"gamma: empirical {gamma_hat:.4g} inflated by {factor} -> {gamma:.4g}"]
    provenance = "empirical"
    if closed_mu is not None and closed_mu >= mu:
        notes.append(f"mu: closed-form bound {closed_mu:.4g} >= inflated empirical {mu:.4g}")
        mu = closed_mu
        provenance = "paper_bound"
    else:
        notes.append(f"mu: empirical {mu_hat:.4g} inflated by {factor} -> {mu:.4g}")
    return RipConstants(gamma, mu, provenance, gamma_hat, mu_hat, tuple(notes))


def estimate_constants(op: FourierOperator, config: ModelConfig, kernel: RadialKernel, trials: int = 2000,
                       rng_seed: int = 0, constrained: bool = False, factor: float = 1.25,
                       coherence_trials: int | None = None) -> RipConstants:
    """RIP and coherence constants at the separation the chosen bound needs.

    The unconstrained ball bound uses epsilon/2-separated trains and dipoles;
    the constrained one uses epsilon.
    """
    sep = config.epsilon if constrained else config.epsilon / 2
    cfg = config.with_epsilon(sep)
    r1 = estimate_rip(op, cfg, kernel, trials, rng_seed, include_derivatives=False)
    r2 = estimate_rip(op, cfg, kernel, trials, rng_seed + 1, include_derivatives=True)
    gamma_hat = max(r1.gamma_lower, r2.gamma_lower)
    mu_hat = coherence_estimate(kernel, cfg, coherence_trials or trials, rng_seed + 2) if config.k >= 2 else 0.0
    closed_mu = closed_form_coherence_for(kernel, config.k, sep)
    rip = inflate_constants(gamma_hat, mu_hat, config.k, closed_mu, factor)
    note = f"constants measured at separation {sep:g} ({'constrained' if constrained else 'unconstrained'})"
    return RipConstants(rip.gamma, rip.mu, rip.provenance, rip.raw_gamma, rip.raw_mu, (note,) + rip.notes)


# ---------------------------------------------------------------------------
# Dense symmetric eigenvalues
# ---------------------------------------------------------------------------


def symmetric_eigenvalues(M, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0)
    if A.size and np.abs(A - A.T).max() > 1e-10 * scale:
        raise NotSymmetric(f"asymmetry {np.abs(A - A.T).max():.3e}")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    fro = np.linalg.norm(A)
    if n < 2 or fro == 0:
        return np.sort(np.diag(A))
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off < tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
    return np.sort(np.diag(A))


def gerschgorin_bound(F) -> float:
    """``max_l ||F[l, :]||_1``, an upper bound on the spectral norm of symmetric F."""
    F = np.asarray(F, dtype=float)
    return float(np.abs(F).sum(axis=1).max())


def condition_number(M) -> float:
    ev = symmetric_eigenvalues(M)
    return float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf
