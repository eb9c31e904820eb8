"""Fixed-step gradient descent, basin probing and separation heuristics."""

from __future__ import annotations

import enum
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AlphaOutOfRange, InfeasibleSeparation
from .objective import Objective
from .spike_model import SpikeTrain, is_in_theta, min_separation, pack, perturb, sort_by_position, unpack

DIVERGENCE_FACTOR = 1e6


class Termination(str, enum.Enum):
    GRAD_TOL = "GradTol"
    DIST_TOL = "DistTol"
    MAX_ITERS = "MaxIters"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class DescentSettings:
    """``tau=None`` switches to backtracking (Armijo) steps, which the theory does not cover."""

    tau: float | None = None
    max_iters: int = 10_000
    grad_tol: float = 1e-10
    dist_tol: float | None = None
    project_separation: bool = False
    record_trace: bool = True
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.grad_tol < 0 or (self.dist_tol is not None and self.dist_tol < 0):
            raise ValueError("tolerances must be nonnegative")


@dataclass
class DescentTrace:
    iterates: list = field(default_factory=list)
    objective_values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    distances_to_ref: list = field(default_factory=list)
    min_separations: list = field(default_factory=list)
    iteration_numbers: list = field(default_factory=list)
    termination: Termination = Termination.MAX_ITERS
    n_iters: int = 0
    final: SpikeTrain | None = None

    @property
    def final_distance(self) -> float | None:
        return self.distances_to_ref[-1] if self.distances_to_ref else None

    @property
    def final_grad_norm(self) -> float:
        return self.grad_norms[-1]

    def distance_monotone_fraction(self, rtol: float = 0.0) -> float:
        """Fraction of recorded steps along which the distance to the reference did not grow."""
        dist = np.asarray(self.distances_to_ref)
        if dist.size < 2:
            return 1.0
        ok = dist[1:] <= dist[:-1] * (1 + rtol)
        return float(np.mean(ok))

    def rows(self):
        for i, it in enumerate(self.iteration_numbers):
            dist = self.distances_to_ref[i] if self.distances_to_ref else float("nan")
            yield (it, self.objective_values[i], self.grad_norms[i], dist, self.min_separations[i])


def _armijo(obj: Objective, theta, g, grad, tau0, settings):
    gn2 = float(grad @ grad)
    tau = tau0
    for _ in range(60):
        cand = theta - tau * grad
        with warnings.catch_warnings():
            # trial points may overshoot the domain; only accepted iterates matter
            warnings.simplefilter("ignore", RuntimeWarning)
            gc = obj.eval(cand)
        if np.isfinite(gc) and gc <= g - settings.armijo_slope * tau * gn2:
            return cand, tau
        tau *= settings.armijo_shrink
    return theta - tau * grad, tau


def gradient_descent(obj: Objective, theta0: SpikeTrain, settings: DescentSettings,
                     theta_ref: SpikeTrain | None = None) -> DescentTrace:
    """Iterate ``theta <- theta - tau grad g(theta)`` until a stopping rule fires.

    Divergence (objective above 1e6 times its start value or non-finite
    coordinates) is reported as a termination, never raised.
    """
    cfg = obj.config
    ref = None if theta_ref is None else pack(theta_ref)
    theta = pack(theta0)
    if settings.project_separation:
        theta = pack(repel_projection(unpack(theta, cfg)))
    trace = DescentTrace()

    def record(it, th, g, gnorm, force=False):
        if not (settings.record_trace or force or it == 0):
            return
        trace.iteration_numbers.append(it)
        trace.iterates.append(th.copy())
        trace.objective_values.append(g)
        trace.grad_norms.append(gnorm)
        if ref is not None:
            trace.distances_to_ref.append(float(np.linalg.norm(th - ref)))
        trace.min_separations.append(min_separation(unpack(th, cfg)))

    g, grad = obj.value_and_gradient(theta)
    gnorm = float(np.linalg.norm(grad))
    g_start = g
    record(0, theta, g, gnorm)
    tau_ls = 1.0
    it = 0
    status = Termination.MAX_ITERS
    while True:
        if gnorm <= settings.grad_tol:
            status = Termination.GRAD_TOL
            break
        if ref is not None and settings.dist_tol is not None and np.linalg.norm(theta - ref) <= settings.dist_tol:
            status = Termination.DIST_TOL
            break
        if it >= settings.max_iters:
            status = Termination.MAX_ITERS
            break
        if settings.tau is not None:
            theta = theta - settings.tau * grad
        else:
            theta, tau_ls = _armijo(obj, theta, g, grad, 2.0 * tau_ls, settings)
        if settings.project_separation:
            theta = pack(repel_projection(unpack(theta, cfg)))
        it += 1
        if not np.all(np.isfinite(theta)):
            status = Termination.DIVERGED
            break
        g, grad = obj.value_and_gradient(theta)
        gnorm = float(np.linalg.norm(grad))
        if not np.isfinite(g) or g > DIVERGENCE_FACTOR * g_start:
            record(it, theta, g, gnorm, force=True)
            status = Termination.DIVERGED
            break
        record(it, theta, g, gnorm)
    if trace.iteration_numbers[-1] != it:
        record(it, theta, g, gnorm, force=True)
    trace.termination = status
    trace.n_iters = it
    trace.final = unpack(theta, cfg) if np.all(np.isfinite(theta)) else None
    return trace


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("SPIKEBASIN_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class ProbeResult:
    beta: float
    trials: int
    successes: int
    tau: float | None
    seed: int
    final_distances: list
    final_grad_norms: list
    terminations: list
    left_ball: int
    monotone_fraction: float
    traces: list | None = None

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    def summary(self) -> dict:
        return {"beta": self.beta, "trials": self.trials, "successes": self.successes, "tau": self.tau,
                "seed": self.seed}


def probe_basin(obj: Objective, theta_star: SpikeTrain, beta: float, trials: int, settings: DescentSettings,
                rng_seed: int = 0, *, success_tol: float | None = None, keep_traces: bool = False) -> ProbeResult:
    """Run descent from ``trials`` uniform draws in the ball of radius ``beta``.

    A trial succeeds when its final distance to ``theta_star`` is at most
    ``success_tol`` (default: ``settings.dist_tol``); with neither set, when
    it stops on the gradient tolerance. Trials that leave the ball are
    counted in ``left_ball``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tol = settings.dist_tol if success_tol is None else success_tol
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(rng_seed).spawn(trials)]

    def run(seed):
        start = perturb(theta_star, beta, seed)
        return gradient_descent(obj, start, settings, theta_ref=theta_star)

    workers = min(n_workers(), trials)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            traces = list(ex.map(run, seeds))
    else:
        traces = [run(s) for s in seeds]

    successes = 0
    left = 0
    steps_ok = steps = 0
    for tr in traces:
        if tol is not None:
            ok = tr.final_distance is not None and tr.final_distance <= tol
        else:
            ok = tr.termination == Termination.GRAD_TOL
        successes += bool(ok)
        dist = np.asarray(tr.distances_to_ref)
        if beta > 0 and dist.size and dist.max() >= beta:
            left += 1
        if dist.size > 1:
            steps += dist.size - 1
            steps_ok += int(np.sum(dist[1:] <= dist[:-1]))
    return ProbeResult(
        beta=beta, trials=trials, successes=successes, tau=settings.tau, seed=rng_seed,
        final_distances=[tr.final_distance for tr in traces],
        final_grad_norms=[tr.final_grad_norm for tr in traces],
        terminations=[tr.termination.value for tr in traces], left_ball=left,
        monotone_fraction=steps_ok / steps if steps else 1.0,
        traces=traces if keep_traces else None,
    )


# ---------------------------------------------------------------------------
# Separation heuristic
# ---------------------------------------------------------------------------


def _pava(y: np.ndarray) -> np.ndarray:
    """Least-squares nondecreasing fit (pool adjacent violators, unit weights)."""
    means: list[float] = []
    sizes: list[int] = []
    for v in y:
        means.append(float(v))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            n = sizes[-2] + sizes[-1]
            means[-2] = (means[-2] * sizes[-2] + means[-1] * sizes[-1]) / n
            sizes[-2] = n
            means.pop()
            sizes.pop()
    return np.repeat(means, sizes)


def _repel_1d(t: np.ndarray, gap: float, R: float) -> np.ndarray:
    k = t.size
    if (k - 1) * gap > 2 * R:
        raise InfeasibleSeparation(f"{k} spikes need span {(k - 1) * gap:.4g} > 2R = {2 * R:.4g}")
    order = np.argsort(t, kind="stable")
    offsets = gap * np.arange(k)
    # x_i = z_i + i*gap with z nondecreasing: minimal displacement is isotonic regression
    z = _pava(t[order] - offsets)
    z = np.clip(z, -R, R - (k - 1) * gap)
    out = np.empty(k)
    out[order] = z + offsets
    return out


def _repel_nd(t: np.ndarray, gap: float, R: float, max_rounds: int = 10_000) -> np.ndarray:
    k, d = t.shape
    # volume packing bound: k disjoint gap/2-balls inside the (R + gap/2)-ball
    if k > 1 and k * (gap / 2) ** d > (R + gap / 2) ** d:
        raise InfeasibleSeparation(f"{k} spikes at spacing {gap:.4g} cannot fit in the radius-{R:.4g} ball")
    x = t.copy()
    for _ in range(max_rounds):
        moved = False
        for i in range(k):
            for j in range(i + 1, k):
                diff = x[j] - x[i]
                dist = np.linalg.norm(diff)
                if dist < gap:
                    u = diff / dist if dist > 0 else np.eye(d)[0]
                    push = 0.5 * (gap - dist) * (1 + 1e-6)
                    x[i] -= push * u
                    x[j] += push * u
                    moved = True
        norms = np.linalg.norm(x, axis=1)
        out = norms > R
        if np.any(out):
            x[out] *= (R / norms[out])[:, None]
            moved = True
        if not moved:
            return x
    raise InfeasibleSeparation("pairwise repulsion did not reach the required separation")


def repel_projection(theta: SpikeTrain) -> SpikeTrain:
    """Move positions apart so that every pair is more than epsilon apart.

    For d = 1 this is the exact minimal-displacement map onto sorted
    positions with gaps ``epsilon (1 + 1e-9)`` inside ``[-R, R]``. For
    d >= 2 it is an iterative pairwise push-apart heuristic. Amplitudes and
    spike indices are unchanged; separated inputs are returned as is.
    """
    if is_in_theta(theta):
        return theta
    cfg = theta.config
    gap = cfg.epsilon * (1 + 1e-9)
    if cfg.d == 1:
        pos = _repel_1d(theta.positions[:, 0], gap, cfg.R)[:, None]
    else:
        pos = _repel_nd(theta.positions, gap, cfg.R)
    out = theta.replace(positions=pos)
    if min_separation(out) <= cfg.epsilon:
        raise InfeasibleSeparation("projection could not enforce strict separation")
    return out


# ---------------------------------------------------------------------------
# Interpolation path (d = 1)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathPoint:
    lam: float
    theta: SpikeTrain
    value: float
    evaluations: int


def interpolation_path_check(obj: Objective, theta0: SpikeTrain, theta1: SpikeTrain, alpha: float,
                             grid: int = 64) -> PathPoint:
    """Find ``lambda`` with ``g((1-lambda) theta0 + lambda theta1) = alpha`` along a separated path.

    Both endpoints are sorted by position first, which keeps every point of
    the segment separated. Every evaluated point is checked for membership.
    """
    if obj.config.d != 1:
        raise ValueError("the interpolation path argument needs d = 1")
    for th in (theta0, theta1):
        if not is_in_theta(th):
            raise ValueError("both endpoints must be separated and inside the domain")
    p0 = pack(sort_by_position(theta0))
    p1 = pack(sort_by_position(theta1))
    cfg = obj.config
    evals = 0

    def value(lam):
        nonlocal evals
        th = unpack((1 - lam) * p0 + lam * p1, cfg)
        if not is_in_theta(th):
            raise AssertionError(f"path point lambda={lam} left the separated set")
        evals += 1
        return obj.eval(th), th

    tol = 1e-8 * (1 + abs(alpha))
    # bisect well past the acceptance tolerance so the result is not borderline
    target = 1e-13 * (1 + abs(alpha))
    g0, th0 = value(0.0)
    g1, th1 = value(1.0)
    if abs(g0 - alpha) <= tol:
        return PathPoint(0.0, th0, g0, evals)
    if abs(g1 - alpha) <= tol:
        return PathPoint(1.0, th1, g1, evals)
    if not min(g0, g1) <= alpha <= max(g0, g1):
        raise AlphaOutOfRange(f"alpha={alpha} is outside [{min(g0, g1)}, {max(g0, g1)}]")

    s0 = math.copysign(1.0, g0 - alpha)
    lo, hi = 0.0, 1.0
    for i in range(1, grid + 1):
        lam = i / grid
        gv, th = value(lam)
        if abs(gv - alpha) <= target:
            return PathPoint(lam, th, gv, evals)
        if math.copysign(1.0, gv - alpha) != s0:
            lo, hi = (i - 1) / grid, lam
            break
        lo = lam
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gv, th = value(mid)
        if abs(gv - alpha) <= target or not lo < mid < hi:
            return PathPoint(mid, th, gv, evals)
        if math.copysign(1.0, gv - alpha) == s0:
            lo = mid
        else:
            hi = mid
    return PathPoint(mid, th, gv, evals)
