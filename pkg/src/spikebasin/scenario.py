"""Scenario configs, generated data and report files (JSON and CSV only)."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from .errors import ConfigError
from .kernel import RadialKernel, kernel_from_spec
from .measurement import FourierOperator, apply, draw_random_operator
from .objective import Objective
from .spike_model import ModelConfig, SpikeTrain, sample_theta

SCENARIO_FORMAT = "spikebasin-scenario/1"


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _fail(source: str, text: str, key: str, message: str):
    line = _line_of(text, key)
    where = f"{source}:{line}" if line else source
    raise ConfigError(f"{where}: {message}")


def load_json(path) -> tuple[dict, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    return data, text


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def versions() -> dict:
    from . import __version__

    return {"spikebasin": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_metadata(config: dict, seeds: dict) -> dict:
    return {"config_hash": config_hash(config), "seeds": seeds, "versions": versions()}


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def parse_model(cfg: dict, source: str = "<config>", text: str = "") -> ModelConfig:
    model = cfg.get("model")
    if not isinstance(model, dict):
        _fail(source, text, "model", "missing 'model' object with k, d, epsilon, R")
    for key in ("k", "d", "epsilon", "R"):
        if key not in model:
            _fail(source, text, "model", f"model is missing '{key}'")
    try:
        return ModelConfig(int(model["k"]), int(model["d"]), float(model["epsilon"]), float(model["R"]))
    except (TypeError, ValueError) as exc:
        _fail(source, text, "model", str(exc))


def _seed_or(value, fallback: int, source, text, key) -> int:
    if value is None:
        return fallback
    if not isinstance(value, int) or value < 0:
        _fail(source, text, key, f"'{key}' must be a nonnegative integer")
    return value


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ModelConfig
    kernel_spec: dict
    kernel: RadialKernel
    operator: FourierOperator
    truth: SpikeTrain
    noise: dict | None
    data: np.ndarray
    raw_config: dict
    seeds: dict

    @property
    def noise_norm(self) -> float:
        return 0.0 if self.noise is None else float(self.noise["norm"])

    def objective(self) -> Objective:
        return Objective(self.operator, self.data, self.config)

    def to_dict(self) -> dict:
        return {
            "format": SCENARIO_FORMAT,
            "config": self.raw_config,
            "kernel": self.kernel_spec,
            "operator": self.operator.to_dict(),
            "truth": self.truth.to_dict(),
            "noise": self.noise,
            "data": {"real": self.data.real.tolist(), "imag": self.data.imag.tolist()},
            "metadata": run_metadata(self.raw_config, self.seeds),
        }


def exact_noise(m: int, norm: float, seed: int) -> np.ndarray:
    """Complex Gaussian vector rescaled to Euclidean norm exactly ``norm``."""
    if norm < 0:
        raise ValueError("noise norm must be nonnegative")
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    if norm == 0:
        return np.zeros(m, dtype=complex)
    return e * (norm / np.linalg.norm(e))


def build_scenario(cfg: dict, seed: int = 0, source: str = "<config>", text: str = "") -> Scenario:
    """Materialize a config: operator, ground truth and noisy data."""
    model = parse_model(cfg, source, text)
    fallback = [int(s.generate_state(1)[0] % 2**31) for s in np.random.SeedSequence(seed).spawn(3)]

    kspec = cfg.get("kernel", {"type": "gaussian_auto_k"})
    if not isinstance(kspec, dict):
        _fail(source, text, "kernel", "'kernel' must be an object")
    try:
        kernel = kernel_from_spec(kspec, model)
    except (ConfigError, KeyError, ValueError) as exc:
        _fail(source, text, "kernel", str(exc))

    ospec = cfg.get("operator")
    if not isinstance(ospec, dict):
        _fail(source, text, "operator", "missing 'operator' object ({'m': ..., 'seed': ...} or serialized)")
    if "frequencies" in ospec:
        try:
            op = FourierOperator.from_dict(ospec)
        except (KeyError, ValueError) as exc:
            _fail(source, text, "operator", f"bad serialized operator: {exc}")
        op_seed = op.seed
    else:
        m = ospec.get("m")
        if not isinstance(m, int) or m < 1:
            _fail(source, text, "m", "'operator.m' must be a positive integer")
        op_seed = _seed_or(ospec.get("seed"), fallback[0], source, text, "seed")
        try:
            op = draw_random_operator(m, kernel, model.d, op_seed)
        except ValueError as exc:
            _fail(source, text, "operator", str(exc))
    if op.d != model.d:
        _fail(source, text, "operator", f"operator dimension {op.d} differs from model d={model.d}")

    tspec = cfg.get("truth", {"sample": {}})
    if not isinstance(tspec, dict):
        _fail(source, text, "truth", "'truth' must be an object")
    truth_seed = None
    if "sample" in tspec:
        sspec = tspec["sample"] or {}
        truth_seed = _seed_or(sspec.get("seed"), fallback[1], source, text, "sample")
        amp = sspec.get("amplitude_range", [1.0, 2.0])
        try:
            truth = sample_theta(model, tuple(amp), truth_seed, strict_interior=True)
        except (ValueError, TypeError) as exc:
            _fail(source, text, "sample", str(exc))
    else:
        try:
            truth = SpikeTrain(tspec["amplitudes"], tspec["positions"], model)
        except (KeyError, ValueError) as exc:
            _fail(source, text, "truth", f"bad ground truth: {exc}")

    nspec = cfg.get("noise")
    noise = None
    y = apply(op, truth)
    if nspec is not None:
        if not isinstance(nspec, dict) or "norm" not in nspec:
            _fail(source, text, "noise", "'noise' must be null or {'norm': ..., 'seed': ...}")
        norm = float(nspec["norm"])
        if not (math.isfinite(norm) and norm >= 0):
            _fail(source, text, "norm", "'noise.norm' must be a finite nonnegative number")
        noise_seed = _seed_or(nspec.get("seed"), fallback[2], source, text, "noise")
        noise = {"norm": norm, "seed": noise_seed}
        y = y + exact_noise(op.m, norm, noise_seed)
    y.flags.writeable = False
    seeds = {"base": seed, "operator": op_seed, "truth": truth_seed, "noise": None if noise is None else noise["seed"]}
    return Scenario(model, kspec, kernel, op, truth, noise, y, cfg, seeds)


def scenario_from_dict(data: dict, source: str = "<scenario>") -> Scenario:
    if data.get("format") != SCENARIO_FORMAT:
        raise ConfigError(f"{source}: not a scenario file (format {data.get('format')!r})")
    truth = SpikeTrain.from_dict(data["truth"])
    cfg = truth.config
    kspec = data["kernel"]
    y = np.asarray(data["data"]["real"], dtype=float) + 1j * np.asarray(data["data"]["imag"], dtype=float)
    y.flags.writeable = False
    meta = data.get("metadata", {})
    return Scenario(cfg, kspec, kernel_from_spec(kspec, cfg), FourierOperator.from_dict(data["operator"]), truth,
                    data.get("noise"), y, data.get("config", {}), meta.get("seeds", {}))


def load_scenario(path, seed: int = 0) -> Scenario:
    """Read a generated scenario file, or build one in memory from a config."""
    data, text = load_json(path)
    if "format" in data:
        return scenario_from_dict(data, str(path))
    return build_scenario(data, seed, str(path), text)


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def write_measurements_csv(path, y: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "real", "imag"])
        for i, v in enumerate(y):
            w.writerow([i, repr(float(v.real)), repr(float(v.imag))])


def read_measurements_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["real"]) + 1j * float(r["imag"]) for r in rows])


TRACE_COLUMNS = ["iter", "g", "grad_norm", "dist_to_ref", "min_separation"]


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace.rows():
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
