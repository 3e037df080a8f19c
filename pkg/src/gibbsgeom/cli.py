"""Command line entry point: gibbs-geom {sample, estimate, experiment, diagnose}.

Exit codes: 0 success, 2 clan explosion, 3 invalid configuration,
4 infeasible rejection oracle.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .estimators import (
    COLUMNS,
    clt_experiment,
    estimate_E,
    estimate_V,
    quantization_bound,
    variance_experiment,
    wlln_experiment,
)
from .functionals import Quantization, stabilization_radii
from .geometry import Window, write_points_csv
from .rng import stream
from .sampler import (
    ClanExplosionError,
    InfeasibleOracleError,
    clan_statistics,
    empty_ball_fit,
    log_survival_fit,
    poisson_empty_ball,
    rejection_sample,
)

EXIT_OK = 0
EXIT_CLAN_EXPLOSION = 2
EXIT_VALIDATION = 3
EXIT_ORACLE = 4


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, tuple) else "|".join(map(str, k)): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


class _Timer:
    def __init__(self):
        self.phases = {}

    def phase(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.phases[name] = timer.phases.get(name, 0.0) + time.perf_counter() - self.t

        return _Ctx()


# ---------------------------------------------------------------------------
# subcommands


def run_sample(cfg: RunConfig, out: Path, timer: _Timer) -> dict:
    model = cfg.model
    rows_pts, lam_col, rep_col, reports = [], [], [], []
    with timer.phase("sampling"):
        for lam in cfg.lambdas:
            window = Window.from_volume(lam, cfg.dimension)
            for rep in range(cfg.reps):
                s = model.sample(window, cfg.seed, ("sample", repr(lam), rep))
                rows_pts.append(s.points)
                lam_col += [lam] * len(s.points)
                rep_col += [rep] * len(s.points)
                reports.append({"lambda": lam, "rep": rep, **s.report.to_dict()})
    pts = np.vstack(rows_pts) if rows_pts else np.zeros((0, cfg.dimension))
    marks = stream(cfg.seed, "arrival-marks").random(len(pts))
    with timer.phase("writing"):
        write_points_csv(out / "points.csv", pts, {"lambda": np.array(lam_col, dtype=float), "rep": np.array(rep_col, dtype=np.int64), "mark": marks})
    return {"samples": reports}


def run_estimate(cfg: RunConfig, out: Path, timer: _Timer) -> dict:
    model = cfg.model
    est = cfg.estimate
    target = est.get("target", "E")
    reps = int(est.get("reps", cfg.reps))
    rows, details, warnings = [], {}, []
    for name, fn in cfg.functionals.items():
        with timer.phase(f"estimate_{target}_{name}"):
            if target == "E":
                e = estimate_E(model, fn, reps, cfg.seed, rho=est.get("rho"), probes_per_axis=est.get("probes_per_axis", 3), threads=cfg.threads)
            else:
                e = estimate_V(
                    model,
                    fn,
                    reps,
                    cfg.seed,
                    R_c=est.get("R_c"),
                    n_shells=est.get("n_shells", 24),
                    directions=est.get("directions", 4),
                    rho=est.get("rho"),
                    probes_per_axis=est.get("probes_per_axis", 3),
                    threads=cfg.threads,
                )
                warnings += e.details.get("warnings", [])
        rows.append([name, target, e.value, e.std_error, e.reps, e.details.get("R_c", math.nan), e.details["rho"]])
        details[name] = e.details
    write_table(out / "estimates.csv", ["functional", "target", "value", "std_error", "n_reps", "truncation_radius", "probe_radius"], rows)
    return {"estimates": details, "warnings": warnings}


def _constants(cfg: RunConfig, which: str, timer: _Timer) -> dict | None:
    """Optional E or V estimates used as experiment targets (config key ``targets``)."""
    spec = cfg.raw.get("targets")
    if not spec:
        return None
    reps = int(spec.get("reps", cfg.reps))
    out = {}
    for name, fn in cfg.functionals.items():
        with timer.phase(f"target_{which}_{name}"):
            if which == "E":
                out[name] = estimate_E(cfg.model, fn, reps, cfg.seed, rho=spec.get("rho"), threads=cfg.threads).value
            else:
                out[name] = estimate_V(cfg.model, fn, reps, cfg.seed, R_c=spec.get("R_c"), rho=spec.get("rho"), threads=cfg.threads).value
    return out


def run_experiment(cfg: RunConfig, out: Path, timer: _Timer) -> dict:
    model, kind = cfg.model, cfg.experiment
    args = (model, cfg.functionals, cfg.test_functions, cfg.lambdas, cfg.reps, cfg.seed)
    summary = {}
    warnings = []
    if kind == "quantization_bound":
        fn = cfg.functional
        r = fn.r if isinstance(fn, Quantization) else float(cfg.raw.get("r", 1.0))
        dens = fn.density if isinstance(fn, Quantization) else None
        with timer.phase("quantization_bound"):
            rep = quantization_bound(model, r, cfg.reps, cfg.seed, density=dens, threads=cfg.threads)
        write_table(
            out / "results.csv",
            ["r", "n_reps", "bound", "std_error", "intensity", "poisson_bound_same_intensity", "comparison"],
            [[r, rep["reps"], rep["bound"], rep["std_error"], rep["intensity"], rep["poisson_bound_same_intensity"], rep["comparison"]]],
        )
        if rep["comparison"] == "inconclusive":
            warnings.append("quantization bound comparison inconclusive")
        return {"quantization_bound": rep, "warnings": warnings}
    if kind == "wlln":
        E = _constants(cfg, "E", timer)
        with timer.phase("replications"):
            res = wlln_experiment(*args, E=E, threads=cfg.threads)
    elif kind == "variance":
        V = _constants(cfg, "V", timer)
        with timer.phase("replications"):
            res = variance_experiment(*args, V=V, threads=cfg.threads)
        summary["fits"] = res.summary["fits"]
    else:
        V = _constants(cfg, "V", timer)
        with timer.phase("replications"):
            res = clt_experiment(*args, alpha=float(cfg.raw.get("alpha", 0.01)), n_boot=int(cfg.raw.get("n_boot", 200)), V=V, threads=cfg.threads)
        summary["normality"] = res.summary["normality"]
        summary["monotone"] = res.summary["monotone"]
        summary["covariance"] = res.summary["covariance"]
        for key, val in res.summary["normality"].items():
            if not val["ad_pass"]:
                warnings.append(f"normality rejected by Anderson-Darling for {key}")
    runs = res.summary["runs"]
    summary["moments"] = {repr(lam): run.moment_summary() for lam, run in runs.items()}
    summary["max_horizon"] = {repr(lam): float(run.horizons.max()) for lam, run in runs.items()}
    write_table(out / "results.csv", COLUMNS, res.table())
    summary["warnings"] = warnings
    return summary


def run_diagnose(cfg: RunConfig, out: Path, timer: _Timer) -> dict:
    d, lam = cfg.dimension, cfg.lambdas[0]
    window = Window.from_volume(lam, d)
    diag = cfg.diagnose
    kw = dict(T0=cfg.T0, T_max=cfg.T_max)
    with timer.phase("clans"):
        st = clan_statistics(window, cfg.tau, cfg.potential, cfg.seed, cfg.reps, core_fraction=diag.get("core_fraction", 0.5), **kw)
    fit = log_survival_fit(st["diameter"])
    result = {
        "clan_diameter_fit": None if fit is None else {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2},
        "max_horizon": float(st["horizon"].max()),
    }
    write_table(out / "clans.csv", ["size", "diameter", "depth"], zip(st["size"], st["diameter"], st["depth"]))
    # empty-ball probabilities and stabilisation radii from thermodynamic samples
    radii = np.asarray(diag.get("empty_ball_radii", np.linspace(0.1, 1.5, 15) * cfg.tau ** (-1.0 / d)))
    stab_grid = np.asarray(diag.get("stabilization_radii", np.linspace(0.1, 6.0, 60) * cfg.tau ** (-1.0 / d)))
    samples, stab = [], []
    fn = cfg.functional
    with timer.phase("empty_ball_and_stabilization"):
        for rep in range(cfg.reps):
            s = cfg.model.sample(window, cfg.seed, ("diagnose", rep))
            samples.append(s.points)
            X = s.points
            core = np.flatnonzero(np.all(np.abs(X) <= window.half_width - stab_grid.max(), axis=1))
            core = core[: int(diag.get("stabilization_points", 100))]
            marks = stream(cfg.seed, "diagnose-marks", rep).random(len(X)) if fn.requires_marks else None
            stab.append(stabilization_radii(fn, X, core, stab_grid, marks))
    eb = empty_ball_fit(samples, window, radii)
    result["empty_ball_fit"] = None if eb is None else {"slope": eb[0], "intercept": eb[1], "r2": eb[2], "poisson_slope": -cfg.tau * math.pi ** (d / 2) / math.gamma(d / 2 + 1)}
    if eb is not None:
        write_table(out / "empty_ball.csv", ["r", "p_empty", "p_empty_poisson"], zip(radii, eb[3], poisson_empty_ball(cfg.tau, d, radii)))
    stab = np.concatenate(stab) if stab else np.zeros(0)
    sfit = log_survival_fit(stab[np.isfinite(stab)])
    result["stabilization_fit"] = None if sfit is None else {"slope": sfit.slope, "intercept": sfit.intercept, "r2": sfit.r2}
    result["stabilization_unresolved"] = int(np.sum(~np.isfinite(stab)))
    if diag.get("oracle"):
        with timer.phase("rejection_oracle"):
            small = Window.from_volume(float(diag.get("oracle_volume", 5.0)), d)
            got, proposals = rejection_sample(small, cfg.tau, cfg.potential, cfg.seed, int(diag.get("oracle_samples", 1000)), max_proposals=int(diag.get("oracle_max_proposals", 10**6)))
            result["oracle"] = {"samples": len(got), "proposals": proposals, "mean_count": float(np.mean([len(x) for x in got]))}
    return result


COMMANDS = {"sample": run_sample, "estimate": run_estimate, "experiment": run_experiment, "diagnose": run_diagnose}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbs-geom", description="Perfect sampling of Gibbs point processes and stabilizing functionals.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", required=True, help="JSON configuration file")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: $GIBBS_GEOM_THREADS or 1)")
        sp.add_argument("--out-dir", default=None, help="output directory")
    return p


def _threads(arg) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("GIBBS_GEOM_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            return None
    return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t_start = time.perf_counter()
    try:
        cfg = parse_config(args.config, args.command, {"seed": args.seed, "threads": _threads(args.threads), "out_dir": args.out_dir})
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timer = _Timer()
    report = {"command": args.command, "config_hash": cfg.hash, "seed": cfg.seed, "threads": cfg.threads}
    code = EXIT_OK
    try:
        report["result"] = COMMANDS[args.command](cfg, out, timer)
    except ClanExplosionError as exc:
        print(f"clan explosion: {exc}", file=sys.stderr)
        report["error"] = str(exc)
        code = EXIT_CLAN_EXPLOSION
    except InfeasibleOracleError as exc:
        print(f"oracle infeasible: {exc}", file=sys.stderr)
        report["error"] = str(exc)
        code = EXIT_ORACLE
    report["warnings"] = (report.get("result") or {}).get("warnings", [])
    report["timings"] = timer.phases
    report["wall_clock"] = time.perf_counter() - t_start
    write_json(out / "report.json", report)
    return code


if __name__ == "__main__":
    sys.exit(main())
