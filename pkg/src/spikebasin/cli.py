"""Command-line front end: ``spikebasin {generate|certify|descend|probe|validate}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .certificates import (
    BasinCertificate,
    RipConstants,
    beta_max_noiseless,
    beta_max_noisy,
    estimate_constants,
    symmetric_eigenvalues,
)
from .errors import ConfigError, SpikeBasinError, VacuousCertificate
from .measurement import compute_D_A_R
from .scenario import (
    Scenario,
    build_scenario,
    load_json,
    load_scenario,
    run_metadata,
    write_json,
    write_measurements_csv,
    write_rows_csv,
    write_trace_csv,
)
from .solver import DescentSettings, gradient_descent, probe_basin
from .spike_model import SpikeTrain, perturb
from .validation import CSV_HEADER, SUITES, run_suite

log = logging.getLogger("spikebasin")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_VACUOUS = 3
EXIT_CONFIG = 4


# ---------------------------------------------------------------------------
# Pipeline pieces shared by the commands
# ---------------------------------------------------------------------------


def locate_minimizer(sc: Scenario, grad_tol: float = 1e-12, max_iters: int = 100_000) -> SpikeTrain:
    """The ground truth for noiseless data, else the descent limit started at the truth.

    The noisy search uses the fixed step ``0.9 / lambda_max(H(truth))``:
    backtracking stalls near the minimum once the required decrease falls
    below the rounding resolution of the objective.
    """
    if sc.noise_norm == 0:
        return sc.truth
    obj = sc.objective()
    lam = float(symmetric_eigenvalues(obj.hessian(sc.truth).H).max())
    if not lam > 0:
        raise SpikeBasinError("Hessian at the ground truth has no positive eigenvalue")
    tr = gradient_descent(obj, sc.truth, DescentSettings(0.9 / lam, max_iters, grad_tol, record_trace=False))
    log.info("located noisy minimizer: %s after %d iterations, |grad|=%.3e", tr.termination.value, tr.n_iters,
             tr.final_grad_norm)
    if tr.final is None or tr.termination.value == "Diverged":
        raise SpikeBasinError("descent from the ground truth diverged on noisy data")
    return tr.final


@dataclass
class CertifyResult:
    certificate: BasinCertificate
    rip: RipConstants
    theta_star: SpikeTrain
    D: float


def certify_scenario(sc: Scenario, *, gamma: float | None = None, mu: float | None = None, rip_trials: int = 2000,
                     q: float = 0.5, seed: int = 0, constrained: bool = False) -> CertifyResult:
    """Constants, D_{A,R} and the basin certificate (vacuous results are returned, not raised)."""
    theta_star = locate_minimizer(sc)
    if gamma is not None and mu is not None:
        rip = RipConstants(gamma, mu, "user", notes=("gamma and mu supplied by the user",))
    else:
        est = estimate_constants(sc.operator, sc.config, sc.kernel, rip_trials, seed, constrained=constrained)
        notes = list(est.notes)
        g, m_ = est.gamma, est.mu
        if gamma is not None:
            g = gamma
            notes.append(f"gamma overridden by the user: {gamma}")
        if mu is not None:
            m_ = mu
            notes.append(f"mu overridden by the user: {mu}")
        user = gamma is not None or mu is not None
        rip = RipConstants(g, m_, "user" if user else est.provenance, est.raw_gamma, est.raw_mu, tuple(notes))
    D = compute_D_A_R(sc.operator)
    m = sc.operator.m
    if sc.noise_norm > 0:
        cert = beta_max_noisy(theta_star, rip, sc.kernel, D, m, sc.noise_norm, q=q, allow_vacuous=True)
    else:
        cert = beta_max_noiseless(theta_star, rip, sc.kernel, D, m, q=q, allow_vacuous=True)
    return CertifyResult(cert, rip, theta_star, D)


def parse_beta(text: str, beta_max: float | None) -> float:
    """``0.5``, ``2e-5`` or a multiple of the certified radius such as ``0.9bmax``."""
    text = text.strip()
    if text.endswith("bmax"):
        if beta_max is None:
            raise ConfigError(f"{text!r} needs a certified beta_max")
        text_value, scale = text[:-4] or "1", beta_max
    else:
        text_value, scale = text, 1.0
    try:
        value = float(text_value) * scale
    except ValueError:
        raise ConfigError(f"cannot parse beta {text!r}") from None
    if not (math.isfinite(value) and value >= 0):
        raise ConfigError(f"beta must be a finite nonnegative number, got {text!r}")
    return value


def _needs_certificate(args) -> bool:
    if args.tau == "auto":
        return True
    texts = [getattr(args, "start", "")] + getattr(args, "beta_grid", "").split(",")
    return any("bmax" in t for t in texts)


def _certificate_for(sc, args) -> CertifyResult:
    for name in ("gamma", "mu"):
        value = getattr(args, name)
        if value is not None and not (math.isfinite(value) and value >= 0):
            raise ConfigError(f"--{name} must be a finite nonnegative number")
    if args.gamma is not None and args.gamma > 1:
        raise ConfigError("--gamma must not exceed 1")
    return certify_scenario(sc, gamma=args.gamma, mu=args.mu, rip_trials=args.rip_trials, q=args.q, seed=args.seed,
                            constrained=args.constrained)


def _tau(args, cr: CertifyResult | None) -> float | None:
    if args.tau != "auto":
        try:
            tau = float(args.tau)
        except ValueError:
            raise ConfigError(f"--tau must be 'auto' or a number, got {args.tau!r}") from None
        if not tau > 0:
            raise ConfigError("--tau must be positive")
        return tau
    if cr is not None and not cr.certificate.vacuous:
        return 0.9 * cr.certificate.tau_max
    log.warning("no usable certificate: falling back to backtracking steps (outside the certified regime)")
    return None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg, text = load_json(args.config)
    sc = build_scenario(cfg, args.seed, str(args.config), text)
    out = Path(args.out)
    write_json(out / "scenario.json", sc.to_dict())
    write_json(out / "truth.json", sc.truth.to_dict())
    write_json(out / "operator.json", sc.operator.to_dict())
    write_measurements_csv(out / "measurements.csv", sc.data)
    print(f"scenario written to {out / 'scenario.json'} (k={sc.config.k}, d={sc.config.d}, m={sc.operator.m}, "
          f"noise={sc.noise_norm:g})")
    return EXIT_OK


def _summary_text(cr: CertifyResult) -> str:
    c = cr.certificate
    lines = [
        f"beta_max      {c.beta_max:.6g}",
        f"C1            {c.C1:.6g}",
        f"{'C3' if c.noisy else 'C2'}            {c.C2_or_C3:.6g}",
        f"c_h           {c.c_h_used:.6g}",
        f"L             {c.L:.6g}",
        f"tau_max       {c.tau_max:.6g}",
        f"gamma, mu     {c.gamma:.6g}, {c.mu:.6g} ({c.provenance})",
        f"D_A_R         {cr.D:.6g}",
    ]
    if c.noisy:
        lines.append(f"noise         {c.noise_norm:.6g} (budget {c.noise_budget:.6g})")
    lines.append(f"vacuous       {c.vacuous}")
    lines += ["", "assumptions:"] + [f"  - {n}" for n in c.assumptions_log]
    return "\n".join(lines) + "\n"


def cmd_certify(args) -> int:
    sc = load_scenario(args.config, args.seed)
    cr = _certificate_for(sc, args)
    report = {
        "certificate": cr.certificate.to_dict(),
        "inputs": {"D_A_R": cr.D, "m": sc.operator.m, "rip": cr.rip.to_dict(), "theta_star": cr.theta_star.to_dict(),
                   "rip_trials": args.rip_trials, "q": args.q, "constrained": args.constrained},
        "metadata": run_metadata(sc.raw_config, {**sc.seeds, "command": args.seed}),
    }
    out = Path(args.out)
    write_json(out / "certificate.json", report)
    text = _summary_text(cr)
    (out / "certificate.txt").write_text(text)
    print(text, end="")
    if cr.certificate.vacuous:
        print(f"vacuous certificate: beta_max={cr.certificate.beta_max:.3e}, "
              f"curvature lower bound={cr.certificate.lambda_min_lb:.3e}", file=sys.stderr)
        return EXIT_VACUOUS
    return EXIT_OK


def _start_point(args, sc: Scenario, theta_star: SpikeTrain, beta_max: float | None) -> SpikeTrain:
    spec = args.start
    if spec == "truth":
        return sc.truth
    if spec.startswith("perturb:"):
        return perturb(theta_star, parse_beta(spec[len("perturb:"):], beta_max), args.seed)
    path = spec[len("file:"):] if spec.startswith("file:") else spec
    data, _ = load_json(path)
    try:
        start = SpikeTrain.from_dict(data)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: not a spike train ({exc})") from exc
    if start.config != sc.config:
        raise ConfigError(f"{path}: model (k, d, epsilon, R) differs from the scenario")
    return start


def cmd_descend(args) -> int:
    sc = load_scenario(args.config, args.seed)
    cr = _certificate_for(sc, args) if _needs_certificate(args) else None
    theta_star = cr.theta_star if cr else locate_minimizer(sc)
    beta_max = cr.certificate.beta_max if cr and not cr.certificate.vacuous else None
    start = _start_point(args, sc, theta_star, beta_max)
    settings = DescentSettings(_tau(args, cr), args.max_iters, args.grad_tol, args.dist_tol, args.project)
    tr = gradient_descent(sc.objective(), start, settings, theta_ref=theta_star)
    out = Path(args.out)
    write_trace_csv(out / "trace.csv", tr)
    summary = {
        "termination": tr.termination.value, "iterations": tr.n_iters, "tau": settings.tau,
        "final_distance": tr.final_distance, "final_grad_norm": tr.final_grad_norm,
        "final_objective": tr.objective_values[-1], "min_separation": float(np.min(tr.min_separations)),
        "final": None if tr.final is None else tr.final.to_dict(), "start": args.start,
        "project_separation": args.project,
        "metadata": run_metadata(sc.raw_config, {**sc.seeds, "command": args.seed}),
    }
    write_json(out / "descend_summary.json", summary)
    print(f"{tr.termination.value} after {tr.n_iters} iterations; distance to minimizer {tr.final_distance:.3e}")
    return EXIT_OK


def cmd_probe(args) -> int:
    sc = load_scenario(args.config, args.seed)
    cr = _certificate_for(sc, args) if _needs_certificate(args) else None
    theta_star = cr.theta_star if cr else locate_minimizer(sc)
    beta_max = cr.certificate.beta_max if cr and not cr.certificate.vacuous else None
    betas = [parse_beta(b, beta_max) for b in args.beta_grid.split(",") if b.strip()]
    settings = DescentSettings(_tau(args, cr), args.max_iters, args.grad_tol, args.success_tol, record_trace=True)
    obj = sc.objective()
    rows, summaries = [], []
    for i, beta in enumerate(betas):
        res = probe_basin(obj, theta_star, beta, args.trials, settings, args.seed + i, success_tol=args.success_tol)
        rows.append([repr(beta), res.trials, res.successes, repr(res.rate), res.left_ball,
                     repr(res.monotone_fraction), repr(settings.tau) if settings.tau else "armijo"])
        summaries.append(res.summary())
        print(f"beta={beta:.4g}: {res.successes}/{res.trials} converged")
    out = Path(args.out)
    write_rows_csv(out / "probe.csv", ["beta", "trials", "successes", "rate", "left_ball", "monotone_fraction", "tau"],
                   rows)
    rates = [s["successes"] / s["trials"] for s in summaries]
    nonincreasing = all(b <= a for a, b in zip(rates, rates[1:]))
    write_json(out / "probe_summary.json", {
        "probes": summaries, "success_rate_nonincreasing": nonincreasing,
        "beta_max": beta_max, "metadata": run_metadata(sc.raw_config, {**sc.seeds, "command": args.seed}),
    })
    if not nonincreasing:
        log.info("success rate is not monotone in beta (advisory)")
    return EXIT_OK


def cmd_validate(args) -> int:
    results = run_suite(args.suite, args.seed)
    out = Path(args.out)
    write_rows_csv(out / "validation.csv", CSV_HEADER, [r.row() for r in results])
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite}/{r.check}: {r.value:.3g} (threshold {r.threshold:.3g})"
              + (f"  [{r.detail}]" if r.detail else ""))
    return EXIT_VALIDATION if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="config JSON (generate) or scenario/config JSON")
    p.add_argument("--out", default="run", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=0, help="base seed for this command")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_certify_flags(p):
    p.add_argument("--gamma", type=float, default=None, help="override the RIP constant")
    p.add_argument("--mu", type=float, default=None, help="override the coherence constant")
    p.add_argument("--rip-trials", type=int, default=2000)
    p.add_argument("--q", type=float, default=0.5, help="relaxation in the c_h inequality")
    p.add_argument("--constrained", action="store_true",
                   help="certify the separation-constrained ball (constants at epsilon, not epsilon/2)")


def _add_descent_flags(p):
    p.add_argument("--tau", default="auto", help="'auto' (0.9/L from the certificate) or a step size")
    p.add_argument("--max-iters", type=int, default=20_000)
    p.add_argument("--grad-tol", type=float, default=1e-12)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikebasin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write scenario.json, truth, operator and measurements")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("certify", help="estimate constants and compute the basin certificate")
    _add_common(p)
    _add_certify_flags(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("descend", help="run one gradient descent and write its trace")
    _add_common(p)
    _add_certify_flags(p)
    _add_descent_flags(p)
    p.add_argument("--from", dest="start", default="truth",
                   help="truth | perturb:BETA (BETA may be e.g. 0.9bmax) | file:PATH")
    p.add_argument("--dist-tol", type=float, default=None)
    p.add_argument("--project", action="store_true", help="separation-projected descent (experimental)")
    p.set_defaults(func=cmd_descend)

    p = sub.add_parser("probe", help="success rate of descent from random starts over a beta grid")
    _add_common(p)
    _add_certify_flags(p)
    _add_descent_flags(p)
    p.add_argument("--beta-grid", default="0,0.5bmax,0.95bmax", help="comma-separated radii (values or xbmax)")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--success-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("validate", help="run the oracle suites")
    _add_common(p, config_required=False)
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VacuousCertificate as exc:
        print(f"vacuous certificate: {exc}", file=sys.stderr)
        return EXIT_VACUOUS
    except SpikeBasinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
