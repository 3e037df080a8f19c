"""Run configuration: JSON parsing, validation that reports every problem, and a stable hash."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .estimators import Model, TestFunction
from .functionals import Functional, FunctionalError, functional_from_dict
from .potentials import Potential, PotentialError, potential_from_dict

MODES = ("sample", "estimate", "experiment", "diagnose")
POTENTIALS = ("poisson", "none", "null", "strauss", "hardcore", "area", "pair", "truncated_poisson")
FUNCTIONALS = ("count", "rsa", "knn_length", "knn_components", "percolation_components", "voronoi_length", "quantization")
EXPERIMENTS = ("wlln", "variance", "clt", "quantization_bound")
TARGETS = ("E", "V")
# keys that change where or how fast results are produced but not what they are
_UNHASHED = ("out_dir", "threads")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class RunConfig:
    raw: dict
    mode: str
    dimension: int
    tau: float
    potential: Potential
    functionals: dict
    lambdas: list
    reps: int
    seed: int
    boundary: str = "thermodynamic"
    margin: float | None = None
    T0: float = 5.0
    T_max: float = 640.0
    test_functions: list = field(default_factory=list)
    experiment: str = "wlln"
    estimate: dict = field(default_factory=dict)
    diagnose: dict = field(default_factory=dict)
    out_dir: str = "out"
    threads: int = 1

    @property
    def model(self) -> Model:
        return Model(self.dimension, self.tau, self.potential, self.boundary, self.margin, self.T0, self.T_max)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def functional(self) -> Functional:
        return next(iter(self.functionals.values()))


def config_hash(raw: dict) -> str:
    """sha256 of the canonical JSON form, ignoring output location and thread count."""
    core = {k: v for k, v in raw.items() if k not in _UNHASHED}
    text = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _positive(raw, key, errors, kind=float, default=None):
    val = raw.get(key, default)
    if val is None:
        errors.append(f"{key}: required")
        return None
    try:
        num = kind(val)
    except (TypeError, ValueError):
        errors.append(f"{key}: expected a number, got {val!r}")
        return None
    if kind is int and num != val:
        errors.append(f"{key}: expected an integer, got {val!r}")
        return None
    if not (num > 0 and math.isfinite(num)):
        errors.append(f"{key}: must be positive, got {val!r}")
        return None
    return num


def validate(raw: dict, mode: str | None = None) -> RunConfig:
    """Check a configuration dictionary, collecting all errors before raising."""
    if not isinstance(raw, dict):
        raise ConfigError(["configuration must be a JSON object"])
    errors = []
    mode = mode or raw.get("mode", "sample")
    if mode not in MODES:
        errors.append(f"mode: unknown {mode!r}; supported: {', '.join(MODES)}")

    d = raw.get("dimension", 2)
    if d not in (1, 2, 3) or isinstance(d, bool):
        errors.append(f"dimension: must be 1, 2 or 3, got {d!r}")
        d = None
    tau = _positive(raw, "tau", errors, default=1.0)
    reps = _positive(raw, "reps", errors, kind=int, default=1)

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append(f"seed: must be a non-negative integer, got {seed!r}")

    lambdas = raw.get("lambdas", raw.get("lambda", [1.0]))
    if not isinstance(lambdas, list):
        lambdas = [lambdas]
    if not lambdas:
        errors.append("lambdas: at least one value required")
    for lam in lambdas:
        if not isinstance(lam, (int, float)) or isinstance(lam, bool) or not lam > 0 or not math.isfinite(lam):
            errors.append(f"lambdas: every value must be positive, got {lam!r}")
            break

    potential = None
    pspec = raw.get("potential", {"type": "poisson"})
    if not isinstance(pspec, dict) or pspec.get("type") not in POTENTIALS:
        name = pspec.get("type") if isinstance(pspec, dict) else pspec
        errors.append(f"potential: unknown type {name!r}; supported: {', '.join(POTENTIALS)}")
    elif d is not None:
        try:
            potential = potential_from_dict(pspec, d)
            potential.validate()
        except (PotentialError, ValueError, TypeError) as exc:
            errors.append(f"potential: {exc}")

    fspecs = raw.get("functionals", raw.get("functional", {"functional": "count"}))
    if not isinstance(fspecs, list):
        fspecs = [fspecs]
    functionals = {}
    for fs in fspecs:
        if isinstance(fs, str):
            fs = {"functional": fs}
        name = fs.get("functional") if isinstance(fs, dict) else None
        if name not in FUNCTIONALS:
            errors.append(f"functional: unknown {name!r}; supported: {', '.join(FUNCTIONALS)}")
            continue
        if d is None:
            continue
        try:
            fn = functional_from_dict(fs, d)
        except (FunctionalError, ValueError, TypeError, KeyError) as exc:
            errors.append(f"functional {name}: {exc}")
            continue
        functionals[fs.get("id", fn.name)] = fn

    tfs = []
    for spec in raw.get("test_functions", [{"kind": "constant"}]):
        try:
            tfs.append(TestFunction.from_dict(spec))
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(f"test_functions: {exc}")

    boundary = raw.get("boundary", "thermodynamic")
    if boundary not in ("thermodynamic", "finite"):
        errors.append(f"boundary: must be 'thermodynamic' or 'finite', got {boundary!r}")
    margin = raw.get("margin")
    if margin is not None and not (isinstance(margin, (int, float)) and margin >= 0):
        errors.append(f"margin: must be non-negative, got {margin!r}")
    T0 = _positive(raw, "T0", errors, default=5.0)
    T_max = _positive(raw, "T_max", errors, default=640.0)
    if T0 is not None and T_max is not None and T0 > T_max:
        errors.append("T0: must not exceed T_max")

    experiment = raw.get("experiment", "wlln")
    if mode == "experiment" and experiment not in EXPERIMENTS:
        errors.append(f"experiment: unknown {experiment!r}; supported: {', '.join(EXPERIMENTS)}")
    estimate = dict(raw.get("estimate", {}))
    if mode == "estimate" and estimate.get("target", "E") not in TARGETS:
        errors.append(f"estimate.target: must be one of {', '.join(TARGETS)}")
    threads = raw.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        errors.append(f"threads: must be a positive integer, got {threads!r}")

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        raw=raw,
        mode=mode,
        dimension=d,
        tau=tau,
        potential=potential,
        functionals=functionals,
        lambdas=[float(x) for x in lambdas],
        reps=reps,
        seed=seed,
        boundary=boundary,
        margin=None if margin is None else float(margin),
        T0=T0,
        T_max=T_max,
        test_functions=tfs,
        experiment=experiment,
        estimate=estimate,
        diagnose=dict(raw.get("diagnose", {})),
        out_dir=str(raw.get("out_dir", "out")),
        threads=threads,
    )


def parse_config(path, mode: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Read and validate a JSON configuration file; ``overrides`` replace top-level keys."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from None
    if isinstance(raw, dict) and overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return validate(raw, mode)
