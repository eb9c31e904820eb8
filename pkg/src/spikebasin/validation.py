"""Oracle suites run by ``spikebasin validate``.

Each check returns a :class:`CheckResult`; a suite fails when any hard check
fails. The derivative suite accepts an objective factory so that a broken
gradient can be injected and seen to fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .certificates import (
    RipConstants,
    beta_max_noiseless,
    beta_max_noisy,
    conditioning_bounds,
    eigen_bounds_at,
    estimate_constants,
    gerschgorin_bound,
    symmetric_eigenvalues,
)
from .kernel import (
    c_h_compute,
    convolved_l2_norm_sq,
    dipole_inner,
    dirac_bilinear_norm_sq,
    finite_dipole,
    gaussian_kernel,
    gaussian_profile,
    kernel_from_convolution,
    measure_inner,
    measure_norm_sq,
    pairwise_coherence,
    sample_separated_collection,
    sigma_from_k,
)
from .measurement import apply, compute_D_A_R, draw_random_operator
from .objective import Objective, quadratic_form_G_identity
from .spike_model import GeneralizedDipole, ModelConfig, pack, sample_theta

SUITES = ("derivatives", "kernel", "bounds")
CSV_HEADER = ["suite", "check", "value", "threshold", "passed", "detail"]


@dataclass(frozen=True)
class CheckResult:
    suite: str
    check: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def row(self):
        return [self.suite, self.check, repr(float(self.value)), repr(float(self.threshold)), self.passed,
                self.detail]


def _check(suite, name, value, threshold, detail="", higher_is_better=False):
    ok = value >= threshold if higher_is_better else value <= threshold
    return CheckResult(suite, name, float(value), float(threshold), bool(ok and math.isfinite(value)), detail)


# ---------------------------------------------------------------------------
# Derivatives
# ---------------------------------------------------------------------------


def random_instance(rng: np.random.Generator, k: int, d: int, m: int, factory=Objective):
    """A random objective with nonzero residual and a separated evaluation point."""
    cfg = ModelConfig(k, d, 0.3, 1.0)
    kern = gaussian_kernel(0.4)
    op = draw_random_operator(m, kern, d, int(rng.integers(2**31)))
    theta = sample_theta(cfg, (0.5, 1.5), int(rng.integers(2**31)), random_sign=True, strict_interior=True)
    other = sample_theta(cfg, (0.5, 1.5), int(rng.integers(2**31)), random_sign=True, strict_interior=True)
    return factory(op, apply(op, other), cfg), theta


def fd_gradient_error(obj: Objective, theta, step: float = 1e-5) -> float:
    x = pack(theta)
    g = obj.gradient(x)
    fd = np.empty_like(x)
    for p in range(x.size):
        e = np.zeros_like(x)
        e[p] = step
        fd[p] = (obj.eval(x + e) - obj.eval(x - e)) / (2 * step)
    return float(np.linalg.norm(fd - g) / max(np.linalg.norm(fd), 1e-300))


def fd_hessian_error(obj: Objective, theta, step: float = 1e-4) -> float:
    x = pack(theta)
    H = obj.hessian(x).H
    fd = np.empty_like(H)
    for p in range(x.size):
        e = np.zeros_like(x)
        e[p] = step
        fd[:, p] = (obj.gradient(x + e) - obj.gradient(x - e)) / (2 * step)
    fd = 0.5 * (fd + fd.T)
    return float(np.linalg.norm(fd - H) / max(np.linalg.norm(fd), 1e-300))


def derivative_suite(seed: int = 0, factory: Callable = Objective, instances_per_shape: int = 1) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    grad_err = hess_err = ident_err = 0.0
    count = 0
    for d in (1, 2, 3):
        for k in (1, 2, 4):
            for m in (64, 512):
                for _ in range(instances_per_shape):
                    obj, theta = random_instance(rng, k, d, m, factory)
                    grad_err = max(grad_err, fd_gradient_error(obj, theta))
                    hess_err = max(hess_err, fd_hessian_error(obj, theta))
                    u = rng.standard_normal(k * (d + 1))
                    a, b = quadratic_form_G_identity(obj, theta, u)
                    ident_err = max(ident_err, abs(a - b) / max(abs(b), 1e-300))
                    count += 1
    return [
        _check("derivatives", "gradient_vs_central_fd", grad_err, 1e-6, f"{count} instances, step 1e-5"),
        _check("derivatives", "hessian_vs_gradient_fd", hess_err, 1e-5, f"{count} instances, step 1e-4"),
        _check("derivatives", "G_quadratic_form_identity", ident_err, 1e-10, f"{count} instances"),
    ]


# ---------------------------------------------------------------------------
# Kernel calculus
# ---------------------------------------------------------------------------


DEFAULT_ETAS = tuple(1e-2 * 0.5 ** np.arange(6))


def dipole_limit_errors(kernel, pairs, etas=DEFAULT_ETAS) -> np.ndarray:
    """Summed |finite-eta inner product - closed form| over ``pairs``, one value per eta."""
    errs = np.zeros(len(etas))
    for nu1, nu2 in pairs:
        exact = dipole_inner(nu1, nu2, kernel)
        for i, h in enumerate(etas):
            errs[i] += abs(measure_inner(finite_dipole(nu1, h), finite_dipole(nu2, h), kernel) - exact)
    return errs


def dipole_limit_order(kernel, pairs, etas=DEFAULT_ETAS) -> float:
    """Least-squares slope of log error vs log eta.

    Errors are summed over the pairs first: a single pair whose first-order
    coefficient nearly vanishes shows a spurious slope when its linear and
    quadratic terms cancel.
    """
    errs = np.maximum(dipole_limit_errors(kernel, pairs, etas), 1e-300)
    return float(np.polyfit(np.log(etas), np.log(errs), 1)[0])


def kernel_suite(seed: int = 0, n_collections: int = 100, n_convolution: int = 5) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    ident = 0.0
    orders = []
    for d in (1, 2, 3):
        kern = gaussian_kernel(float(rng.uniform(0.3, 2.0)))
        pairs = []
        for _ in range(5):
            t = rng.standard_normal(d)
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            dt = GeneralizedDipole(1.0, 0.0, t)
            dp = GeneralizedDipole(0.0, 1.0, t, v)
            ident = max(ident, abs(dipole_inner(dt, dt, kern) - 1.0), abs(dipole_inner(dt, dp, kern)),
                        abs(dipole_inner(dp, dp, kern) - kern.rho2_abs))
            w = rng.standard_normal(d)
            w /= np.linalg.norm(w)
            nu1 = GeneralizedDipole(*rng.standard_normal(2), t, v)
            nu2 = GeneralizedDipole(*rng.standard_normal(2), t + 0.5 * rng.standard_normal(d), w)
            pairs.append((nu1, nu2))
        orders.append(dipole_limit_order(kern, pairs))
    out.append(_check("kernel", "dirac_identities", ident, 1e-12))
    out.append(_check("kernel", "finite_dipole_convergence_order", min(orders), 0.9, f"{len(orders)} kernels x 5 pairs",
                      higher_is_better=True))

    viol = 0.0
    for i in range(n_collections):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(2, 7))
        eps = float(rng.uniform(0.5, 1.5))
        kern = gaussian_kernel(float(rng.uniform(0.2, 1.0)) * eps)
        coll = sample_separated_collection(rng, k, eps, d, region_radius=2.0 * k * eps)
        mu = pairwise_coherence(coll, kern)
        norms = sum(measure_norm_sq(nu, kern) for nu in coll)
        total = measure_norm_sq([atom for nu in coll for atom in nu], kern)
        tol = 1e-9 * max(1.0, norms)
        viol = max(viol, (1 - (k - 1) * mu) * norms - total - tol, total - (1 + (k - 1) * mu) * norms - tol)
    out.append(_check("kernel", "generalized_dipole_sandwich", viol, 0.0, f"{n_collections} collections"))

    width = 0.7
    K, dK, d2K = gaussian_profile(width)
    ck = kernel_from_convolution(K, 12 * width, dK, d2K)
    conv_err = 0.0
    for _ in range(n_convolution):
        ts = rng.uniform(-1, 1, 2)
        atoms = [GeneralizedDipole(float(a), 0.0, [float(t)]) for a, t in zip(rng.standard_normal(2), ts)]
        quad = convolved_l2_norm_sq(K, atoms, 12 * width)
        bil = dirac_bilinear_norm_sq(ck, atoms)
        conv_err = max(conv_err, abs(quad - bil) / abs(bil))
    out.append(_check("kernel", "convolution_identity", conv_err, 1e-6, f"{n_convolution} measures"))

    # independent root of 1 - exp(-t^2/2) = t^2/4 for the unit Gaussian with q = 1/2
    root = optimize.brentq(lambda t: -math.expm1(-t * t / 2) - t * t / 4, 0.5, 3.0, xtol=1e-14)
    c_h = c_h_compute(gaussian_kernel(1.0), 10.0, 0.5)
    out.append(_check("kernel", "c_h_root", abs(c_h - root), 1e-7))
    return out


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------


HAND_EXAMPLE = dict(c_h=0.2, D=2.0, m=1, sigma=1.0, amplitude=1.0)


def hand_certificates():
    """The single-spike worked example with gamma = mu = 0."""
    cfg = ModelConfig(1, 1, 1.0, 1.0)
    from .spike_model import SpikeTrain

    theta = SpikeTrain([HAND_EXAMPLE["amplitude"]], [[0.0]], cfg)
    rip = RipConstants(0.0, 0.0, "user")
    kern = gaussian_kernel(HAND_EXAMPLE["sigma"])
    noiseless = beta_max_noiseless(theta, rip, kern, HAND_EXAMPLE["D"], HAND_EXAMPLE["m"], c_h=HAND_EXAMPLE["c_h"])
    noisy = beta_max_noisy(theta, rip, kern, HAND_EXAMPLE["D"], HAND_EXAMPLE["m"], 0.0, c_h=HAND_EXAMPLE["c_h"])
    return noiseless, noisy


def bounds_suite(seed: int = 0, m: int = 20_000, rip_trials: int = 200) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    cert, noisy = hand_certificates()
    s3 = math.sqrt(3.0)
    err = max(abs(cert.C1 - 0.5), abs(cert.C2_or_C3 - 0.25 / (2 * s3)), abs(cert.beta_max - 0.125 / (2 * s3)),
              abs(noisy.C2_or_C3 - 0.25 / (2 * (1 + s3))), abs(noisy.beta_max - 0.125 / (2 * (1 + s3))))
    out.append(_check("bounds", "hand_certificates", err, 1e-12))

    jac = 0.0
    for n in (2, 5, 12):
        A = rng.standard_normal((n, n))
        A = A + A.T
        jac = max(jac, float(np.abs(symmetric_eigenvalues(A) - np.linalg.eigvalsh(A)).max() / np.abs(A).max()))
    out.append(_check("bounds", "jacobi_vs_lapack", jac, 1e-10))

    cfg = ModelConfig(2, 1, 1.0, 2.0)
    kern = gaussian_kernel(sigma_from_k(2))
    op = draw_random_operator(m, kern, 1, int(rng.integers(2**31)))
    truth = sample_theta(cfg, (1.0, 1.5), int(rng.integers(2**31)), strict_interior=True)
    obj = Objective(op, apply(op, truth), cfg)
    rip = estimate_constants(op, cfg, kern, rip_trials, int(rng.integers(2**31)), constrained=True)
    H = obj.hessian(truth)
    eig = symmetric_eigenvalues(H.H)
    lo, hi = eigen_bounds_at(truth, rip, kern, 0.0).interval(0.1)
    miss = max(lo - eig.min(), eig.max() - hi, 0.0)
    out.append(_check("bounds", "eigen_sandwich_at_minimum", miss, 0.0,
                      f"eig [{eig.min():.4g}, {eig.max():.4g}] in [{lo:.4g}, {hi:.4g}]"))
    kappa = eig.max() / eig.min()
    klo, khi = conditioning_bounds(truth, rip, kern)
    w = khi - klo
    kmiss = max(klo - 0.1 * w - kappa, kappa - khi - 0.1 * w, 0.0)
    out.append(_check("bounds", "condition_number_interval", kmiss, 0.0,
                      f"kappa {kappa:.4g} in [{klo:.4g}, {khi:.4g}]"))

    x = pack(truth) + 0.01 * rng.standard_normal(cfg.n_params)
    F = obj.hessian(x).F
    ger = gerschgorin_bound(F)
    out.append(_check("bounds", "gerschgorin_dominates_spectral_norm",
                      float(np.abs(np.linalg.eigvalsh(F)).max()) - ger, 1e-12))

    D = compute_D_A_R(op)
    betas = []
    for g in (0.0, 0.05, 0.1, 0.2):
        betas.append(beta_max_noiseless(truth, RipConstants(g, rip.mu), kern, D, m, allow_vacuous=True).beta_max)
    out.append(_check("bounds", "beta_max_nonincreasing_in_gamma", float(np.max(np.diff(betas))), 0.0))
    return out


def run_suite(name: str, seed: int = 0, **kwargs) -> list[CheckResult]:
    if name == "all":
        return [r for s in SUITES for r in run_suite(s, seed)]
    if name == "derivatives":
        return derivative_suite(seed, **kwargs)
    if name == "kernel":
        return kernel_suite(seed, **kwargs)
    if name == "bounds":
        return bounds_suite(seed, **kwargs)
    raise ValueError(f"unknown suite {name!r}")
