"""Empirical measures, insertion estimators of the limit constants and the experiment harness.

For a configuration X in Q_lam the empirical measure puts mass xi(x, X) at
x / lam^(1/d) in Q_1.  Over Gibbs input its normalised mean, variance and
fluctuations are compared with

* ``tau * E * int f``           where E = E[xi(0, P) exp(-add_one(0, P))],
* ``tau * V * int f^2``         where V = sigma0 + tau int sigma(0, x) dx,
* a centred Gaussian law.

E and V are estimated by inserting probe points into perfect samples.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gamma as gamma_fn, roots_legendre

from .functionals import Count, Functional, Quantization
from .geometry import Window, as_points, ball_volume
from .potentials import NullPotential, Potential
from .rng import stream
from .sampler import perfect_sample

__all__ = [
    "TestFunction",
    "EmpiricalMeasure",
    "build_measure",
    "integrate",
    "Model",
    "Replications",
    "run_replications",
    "Estimate",
    "estimate_E",
    "estimate_V",
    "wlln_experiment",
    "variance_experiment",
    "clt_experiment",
    "quantization_bound",
    "ExperimentResult",
    "linear_fit",
]


# ---------------------------------------------------------------------------
# test functions


@dataclass
class TestFunction:
    """Bounded function on Q_1 = [-1/2, 1/2]^d.

    kinds: "constant" (value c), "half" (indicator of x_1 < 0 for side
    "left", x_1 >= 0 for side "right"), "affine" (a + b x_1) and "table"
    (values on a regular grid, multilinear interpolation).
    """

    kind: str = "constant"
    params: dict = field(default_factory=dict)
    id: str = ""

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if self.kind not in ("constant", "half", "affine", "table"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if not self.id:
            self.id = self.kind if not self.params else f"{self.kind}(" + ",".join(f"{k}={v}" for k, v in sorted(self.params.items()) if k != "values") + ")"
        if self.kind == "table":
            from scipy.interpolate import RegularGridInterpolator

            vals = np.asarray(self.params["values"], dtype=float)
            axes = [np.linspace(-0.5, 0.5, s) for s in vals.shape]
            self._interp = RegularGridInterpolator(axes, vals)

    def __call__(self, loc) -> np.ndarray:
        loc = np.asarray(loc, dtype=float)
        loc = loc.reshape(len(loc), -1) if loc.ndim > 1 else loc.reshape(-1, 1)
        if self.kind == "constant":
            return np.full(len(loc), float(self.params.get("c", 1.0)))
        if self.kind == "half":
            left = loc[:, 0] < 0
            return (left if self.params.get("side", "left") == "left" else ~left).astype(float)
        if self.kind == "affine":
            return float(self.params.get("a", 1.0)) + float(self.params.get("b", 1.0)) * loc[:, 0]
        return self._interp(np.clip(loc, -0.5, 0.5))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "id": self.id, **self.params}

    @classmethod
    def from_dict(cls, spec: dict) -> "TestFunction":
        spec = dict(spec)
        kind = spec.pop("kind", "constant")
        fid = spec.pop("id", "")
        return cls(kind, spec, fid)


def _grid(d: int):
    n = {1: 4000, 2: 400, 3: 60}.get(d, 20)
    t = (np.arange(n) + 0.5) / n - 0.5
    mesh = np.stack(np.meshgrid(*[t] * d, indexing="ij"), axis=-1).reshape(-1, d)
    return mesh, 1.0 / n**d


def _exact_family(f) -> bool:
    return isinstance(f, TestFunction) and f.kind in ("constant", "half", "affine")


def integral(f, d: int, g=None, multiplier=None) -> float:
    """Integral over Q_1 of f (times g and a multiplier).

    Products of the built-in constant, half-space and affine functions depend
    on x_1 only and are polynomials of degree <= 2 on each half of [-1/2, 1/2],
    so three Gauss-Legendre nodes per half integrate them exactly.  Anything
    else uses the midpoint rule on a regular grid.
    """
    if multiplier is None and _exact_family(f) and (g is None or _exact_family(g)):
        t, wt = roots_legendre(3)
        x1 = np.concatenate([0.25 * (t - 1.0), 0.25 * (t + 1.0)])
        wts = np.concatenate([wt, wt]) * 0.25
        pts = np.zeros((6, d))
        pts[:, 0] = x1
        val = f(pts) if g is None else f(pts) * g(pts)
        return float(np.sum(val * wts))
    pts, w = _grid(d)
    val = f(pts)
    if g is not None:
        val = val * g(pts)
    if multiplier is not None:
        val = val * multiplier(pts)
    return float(np.sum(val) * w)


# ---------------------------------------------------------------------------
# empirical measures


@dataclass
class EmpiricalMeasure:
    locations: np.ndarray  # in Q_1
    weights: np.ndarray
    lam: float
    multiplier: np.ndarray | None = None

    @property
    def total(self) -> float:
        return math.fsum(self.weights)

    def integrate(self, f) -> float:
        vals = f(self.locations) if len(self.weights) else np.zeros(0)
        if self.multiplier is not None:
            vals = vals * self.multiplier
        return math.fsum(vals * self.weights)


def build_measure(X, functional: Functional, lam: float, marks=None, window: Window | None = None, dimension=None) -> EmpiricalMeasure:
    """Empirical measure of ``functional`` on the configuration X ⊂ Q_lam."""
    X = as_points(X, dimension)
    d = X.shape[1]
    if window is None:
        window = Window.from_volume(lam, d)
    if len(X) and not np.all(window.contains(X)):
        raise ValueError("configuration has points outside the window Q_lam")
    weights = functional.values(X, marks, window, lam) if len(X) else np.zeros(0)
    loc = X * lam ** (-1.0 / d)
    mult = None
    if isinstance(functional, Quantization) and not functional.translation_invariant:
        mult = functional.test_multiplier(loc)
    return EmpiricalMeasure(loc, np.asarray(weights, dtype=float), float(lam), mult)


def integrate(measure: EmpiricalMeasure, f) -> float:
    return measure.integrate(f)


# ---------------------------------------------------------------------------
# replications


@dataclass
class Model:
    """Gibbs input: potential, intensity of the free process and sampler settings."""

    dimension: int
    tau: float
    potential: Potential
    mode: str = "thermodynamic"
    margin: float | None = None
    T0: float = 5.0
    T_max: float = 640.0

    def sample(self, window: Window, seed: int, key: tuple):
        return perfect_sample(window, self.tau, self.potential, seed, key, T0=self.T0, T_max=self.T_max, mode=self.mode, margin=self.margin)


@dataclass
class Replications:
    lam: float
    values: dict  # functional name -> (reps, n_test_functions) array of <f, mu>
    counts: np.ndarray
    horizons: np.ndarray
    max_clan_diameter: np.ndarray
    largest_cluster_fraction: np.ndarray | None = None
    moments: dict = field(default_factory=dict)  # functional name -> (reps, 4) per-point means of xi^p

    def moment_summary(self) -> dict:
        """Average per-point p-th moments of xi, p = 1..4 (moment-condition diagnostic)."""
        return {name: np.nanmean(m, axis=0).tolist() for name, m in self.moments.items()}


def _one_replication(model: Model, functionals: dict, tfs: list, lam: float, seed: int, rep: int):
    d = model.dimension
    window = Window.from_volume(lam, d)
    key = ("rep", repr(float(lam)), rep)
    s = model.sample(window, seed, key)
    X = s.points
    marks = stream(seed, "marks", repr(float(lam)), rep).random(len(X))
    out = {}
    moments = {}
    lcf = None
    for name, fn in functionals.items():
        mu = build_measure(X, fn, lam, marks if fn.requires_marks else None, window, d)
        out[name] = np.array([mu.integrate(f) for f in tfs])
        w = mu.weights
        moments[name] = np.array([np.mean(w**p) if len(w) else np.nan for p in (1, 2, 3, 4)])
        if fn.name == "percolation_components" and len(X):
            lcf = float(np.max(1.0 / np.maximum(mu.weights, 1e-300)) / len(X))
    return out, len(X), s.report.horizon_used, s.report.max_clan_diameter, lcf, moments


def run_replications(model: Model, functionals: dict, tfs: list, lam: float, reps: int, seed: int, threads: int = 1) -> Replications:
    """Independent perfect samples on Q_lam, each reduced to <f, mu> for every functional and f.

    Replication r always uses the same random streams, so results do not
    depend on ``threads``.
    """
    work = lambda r: _one_replication(model, functionals, tfs, lam, seed, r)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, range(reps)))
    else:
        results = [work(r) for r in range(reps)]
    values = {name: np.array([res[0][name] for res in results]).reshape(reps, len(tfs)) for name in functionals}
    lcf = [res[4] for res in results]
    return Replications(
        lam=float(lam),
        values=values,
        counts=np.array([res[1] for res in results]),
        horizons=np.array([res[2] for res in results]),
        max_clan_diameter=np.array([res[3] for res in results]),
        largest_cluster_fraction=np.array([np.nan if v is None else v for v in lcf]),
        moments={name: np.array([res[5][name] for res in results]) for name in functionals},
    )


# ---------------------------------------------------------------------------
# insertion estimators


@dataclass
class Estimate:
    value: float
    std_error: float
    reps: int
    details: dict = field(default_factory=dict)

    def ci(self, level: float = 0.95):
        z = stats.norm.ppf(0.5 + level / 2)
        return self.value - z * self.std_error, self.value + z * self.std_error


def _probe_centres(d: int, rho: float, per_axis: int):
    step = 2.0 * rho
    ticks = (np.arange(per_axis) - (per_axis - 1) / 2.0) * step
    centres = np.stack(np.meshgrid(*[ticks] * d, indexing="ij"), axis=-1).reshape(-1, d)
    return centres, Window(per_axis * rho, d)


def _local(X, marks, p, rho):
    rel = X - p
    inside = np.sum(rel * rel, axis=1) <= rho * rho
    return rel[inside], (marks[inside] if marks is not None else None)


def default_probe_radius(model: Model) -> float:
    """Probe ball radius: several mean spacings (more in low dimension, where
    neighbourhoods are thin) and at least two interaction ranges."""
    spacing = model.tau ** (-1.0 / model.dimension)
    factor = {1: 10.0, 2: 5.0}.get(model.dimension, 4.0)
    rng = model.potential.interaction_range
    rng = rng if math.isfinite(rng) else 0.0
    return max(factor * spacing, 2.0 * rng + 2.0 * spacing)


def estimate_E(model: Model, functional: Functional, reps: int, seed: int, rho: float | None = None, probes_per_axis: int = 3, threads: int = 1) -> Estimate:
    """Monte Carlo estimate of E[xi(0, P) exp(-add_one(0, P))].

    Each replication is a perfect sample carrying a lattice of probe points
    2 rho apart; a probe sees the sample inside the ball of radius rho.
    The standard error comes from the spread of per-replication means.
    """
    d = model.dimension
    rho = rho or default_probe_radius(model)
    centres, window = _probe_centres(d, rho, probes_per_axis)
    origin = np.zeros(d)
    local_window = Window(rho, d)

    def work(rep):
        s = model.sample(window, seed, ("E", rep))
        X = s.points
        mrng = stream(seed, "E-marks", rep)
        marks = mrng.random(len(X))
        vals = []
        for p in centres:
            Y, mY = _local(X, marks, p, rho)
            w = math.exp(-model.potential.add_one(origin, Y))
            if w == 0.0:
                vals.append(0.0)
                continue
            xm = mrng.random() if functional.requires_marks else None
            vals.append(functional.value(origin, Y, xm, mY, local_window) * w)
        return float(np.mean(vals))

    per = _map(work, reps, threads)
    return Estimate(
        float(np.mean(per)),
        float(np.std(per, ddof=1) / math.sqrt(reps)),
        reps,
        {"rho": rho, "probes": len(centres), "interaction_range": model.potential.interaction_range},
    )


def _map(fn, n, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return np.array(list(ex.map(fn, range(n))))
    return np.array([fn(i) for i in range(n)])


def _random_directions(rng, n, d):
    u = rng.standard_normal((n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def estimate_V(
    model: Model,
    functional: Functional,
    reps: int,
    seed: int,
    R_c: float | None = None,
    n_shells: int = 24,
    directions: int = 4,
    rho: float | None = None,
    probes_per_axis: int = 3,
    e_probes: int = 16,
    threads: int = 1,
) -> Estimate:
    """Monte Carlo estimate of V = sigma0 + tau * int_{B_Rc} sigma(0, x) dx.

    sigma0 = E[xi(0,P)^2 exp(-add_one(0,P))] and
    sigma(0,x) = E[xi(0, P+x) xi(x, P+0) exp(-add_one({0,x}, P))] - E^2,
    with the two-point cost split as add_one(0, P) + add_one(x, P + 0).
    The radial integral uses shells of equal width, each probed in several
    random directions.  E is estimated from ``e_probes`` extra insertion
    points per probe at random positions: the subtracted term
    tau |B_Rc| E * E[g(0)] then acts as a control variate for the pair
    term instead of doubling its noise.  The standard error follows from
    the delta method on per-replication means.
    """
    d = model.dimension
    tau = model.tau
    pot = model.potential
    spacing = tau ** (-1.0 / d)
    if R_c is None:
        rng_ = pot.interaction_range
        R_c = max(2.0 * spacing, 4.0 * rng_ if math.isfinite(rng_) else 0.0)
    rho = rho or (R_c + default_probe_radius(model))
    centres, window = _probe_centres(d, rho, probes_per_axis)
    edges = np.linspace(0.0, R_c, n_shells + 1)
    radii = 0.5 * (edges[1:] + edges[:-1])
    shell_vol = ball_volume(d, 1.0) * (edges[1:] ** d - edges[:-1] ** d)
    origin = np.zeros(d)
    local_window = Window(rho, d)

    def g_at(Y, mY, m0):
        w = math.exp(-pot.add_one(origin, Y))
        return functional.value(origin, Y, m0, mY, local_window) * w if w > 0 else 0.0, w

    def work(rep):
        s = model.sample(window, seed, ("V", rep))
        X = s.points
        rng = stream(seed, "V-aux", rep)
        marks = rng.random(len(X))
        a_sum = b_sum = s0_sum = last_sum = e_sum = 0.0
        # extra insertion points for E, anywhere their ball fits in the window
        inner = window.half_width - rho
        for q in rng.uniform(-inner, inner, size=(e_probes * len(centres), d)):
            Y, mY = _local(X, marks, q, rho)
            e_sum += g_at(Y, mY, rng.random() if functional.requires_marks else None)[0]
        for p in centres:
            Y, mY = _local(X, marks, p, rho)
            m0 = rng.random() if functional.requires_marks else None
            g0, w0 = g_at(Y, mY, m0)
            xi0 = g0 / w0 if w0 > 0 else 0.0
            b_sum += g0
            a = xi0 * g0
            s0_sum += a
            if w0 > 0:
                Y0 = np.vstack([Y, origin[None, :]])
                m0x = np.concatenate([mY, [m0]]) if mY is not None else None
                for j, s_j in enumerate(radii):
                    acc = 0.0
                    for u in _random_directions(rng, directions, d):
                        x = s_j * u
                        w = w0 * math.exp(-pot.add_one(x, Y0))
                        if w == 0.0:
                            continue
                        mx = rng.random() if functional.requires_marks else None
                        xi_x = functional.value(x, Y0, mx, m0x, local_window)
                        Yx = np.vstack([Y, x[None, :]])
                        mYx = np.concatenate([mY, [mx]]) if mY is not None else None
                        xi_0 = functional.value(origin, Yx, m0, mYx, local_window)
                        acc += xi_0 * xi_x * w
                    a += tau * shell_vol[j] * acc / directions
                    if j == n_shells - 1:
                        last_sum += acc / directions
            a_sum += a
        k = len(centres)
        return a_sum / k, b_sum / k, e_sum / (e_probes * k), last_sum / k, s0_sum / k

    per = _map(work, reps, threads)
    a, b, e = per[:, 0], per[:, 1], per[:, 2]
    vol_c = ball_volume(d, R_c)
    a_bar, b_bar, E_hat = float(np.mean(a)), float(np.mean(b)), float(np.mean(e))
    V_hat = a_bar - tau * vol_c * E_hat * b_bar
    infl = a - tau * vol_c * (E_hat * b + b_bar * e)
    se = float(np.std(infl, ddof=1) / math.sqrt(reps))
    warnings = []
    if V_hat < -3.0 * se:
        warnings.append("negative V estimate beyond 3 SE: increase replications")
    # |sigma(0, x)| / sigma0 on the outermost shell, a proxy for the neglected tail beyond R_c
    sigma0 = float(np.mean(per[:, 4]))
    tail = abs(float(np.mean(per[:, 3])) - E_hat**2) / sigma0 if sigma0 > 0 else math.nan
    return Estimate(
        V_hat,
        se,
        reps,
        {
            "E": E_hat,
            "E_std_error": float(np.std(e, ddof=1) / math.sqrt(reps)),
            "R_c": R_c,
            "rho": rho,
            "n_shells": n_shells,
            "sigma0": sigma0,
            "last_shell_ratio": tail,
            "warnings": warnings,
        },
    )


# ---------------------------------------------------------------------------
# experiments


COLUMNS = ["lambda", "f_id", "n_reps", "mean", "variance", "normalized_stat", "target", "std_error", "ad_stat", "ks_dist"]


@dataclass
class ExperimentResult:
    kind: str
    rows: list
    summary: dict = field(default_factory=dict)

    def table(self):
        return [[row.get(c, math.nan) for c in COLUMNS] for row in self.rows]


def linear_fit(x, y, se=None):
    """Weighted least squares y = a + b x; returns (slope, intercept, slope_se, r2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if se is None else 1.0 / np.asarray(se, dtype=float) ** 2
    W = w.sum()
    xm, ym = np.sum(w * x) / W, np.sum(w * y) / W
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    icpt = ym - slope * xm
    resid = y - icpt - slope * x
    syy = np.sum(w * (y - ym) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / syy if syy > 0 else 1.0
    if se is None:
        dof = max(len(x) - 2, 1)
        slope_se = math.sqrt(np.sum(resid**2) / dof / sxx)
    else:
        slope_se = math.sqrt(1.0 / sxx)
    return float(slope), float(icpt), float(slope_se), float(r2)


def variance_se(v: np.ndarray) -> float:
    """Standard error of the sample variance (moment formula)."""
    n = len(v)
    c = v - v.mean()
    m2 = np.mean(c**2)
    m4 = np.mean(c**4)
    s2 = np.var(v, ddof=1)
    return float(math.sqrt(max(m4 - s2**2 * (n - 3) / (n - 1), 0.0) / n))


def _func_items(functionals):
    return functionals.items() if isinstance(functionals, dict) else [(f.name, f) for f in functionals]


def _tf_integrals(tfs, fn: Functional, d: int, square: bool):
    mult = None
    if isinstance(fn, Quantization) and not fn.translation_invariant:
        mult = fn.test_multiplier
    if square:
        return [integral(f, d, f, mult if mult is None else (lambda z, m=mult: m(z) ** 2)) for f in tfs]
    return [integral(f, d, None, mult) for f in tfs]


def wlln_experiment(model: Model, functionals, tfs, lambdas, reps: int, seed: int, E: dict | None = None, threads: int = 1) -> ExperimentResult:
    """lam^-1 <f, mu_lam> across replications against tau * E * int f."""
    funcs = dict(_func_items(functionals))
    d = model.dimension
    rows = []
    runs = {}
    for lam in lambdas:
        run = run_replications(model, funcs, tfs, lam, reps, seed, threads)
        runs[lam] = run
        for name, fn in funcs.items():
            ints = _tf_integrals(tfs, fn, d, square=False)
            for j, f in enumerate(tfs):
                v = run.values[name][:, j]
                target = math.nan
                if E is not None and name in E:
                    target = model.tau * E[name] * ints[j]
                rows.append(
                    {
                        "lambda": lam,
                        "f_id": f"{name}:{f.id}",
                        "n_reps": reps,
                        "mean": float(v.mean()),
                        "variance": float(v.var(ddof=1)),
                        "normalized_stat": float(v.mean() / lam),
                        "target": target,
                        "std_error": float(v.std(ddof=1) / math.sqrt(reps) / lam),
                    }
                )
    return ExperimentResult("wlln", rows, {"runs": runs})


def variance_experiment(model: Model, functionals, tfs, lambdas, reps: int, seed: int, V: dict | None = None, threads: int = 1) -> ExperimentResult:
    """Var <f, mu_lam> against lam: linear fit, lam^-1 Var against tau * V * int f^2."""
    funcs = dict(_func_items(functionals))
    d = model.dimension
    rows = []
    fits = {}
    runs = {}
    for lam in lambdas:
        runs[lam] = run_replications(model, funcs, tfs, lam, reps, seed, threads)
    for name, fn in funcs.items():
        ints = _tf_integrals(tfs, fn, d, square=True)
        for j, f in enumerate(tfs):
            var, ses = [], []
            for lam in lambdas:
                v = runs[lam].values[name][:, j]
                s2 = float(v.var(ddof=1))
                se = variance_se(v)
                var.append(s2)
                ses.append(se)
                target = model.tau * V[name] * ints[j] if V is not None and name in V else math.nan
                rows.append(
                    {
                        "lambda": lam,
                        "f_id": f"{name}:{f.id}",
                        "n_reps": reps,
                        "mean": float(v.mean()),
                        "variance": s2,
                        "normalized_stat": s2 / lam,
                        "target": target,
                        "std_error": se / lam,
                    }
                )
            slope, icpt, slope_se, r2 = linear_fit(lambdas, var, ses)
            _, _, _, r2_plain = linear_fit(lambdas, var)
            fits[f"{name}:{f.id}"] = {"slope": slope, "intercept": icpt, "slope_se": slope_se, "r2_weighted": r2, "r2": r2_plain}
    return ExperimentResult("variance", rows, {"fits": fits, "runs": runs})


def ks_distance(z: np.ndarray) -> float:
    z = np.sort((z - z.mean()) / z.std(ddof=1))
    n = len(z)
    cdf = stats.norm.cdf(z)
    return float(max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n)))


def anderson_normal(z: np.ndarray, alpha: float = 0.01):
    """Anderson-Darling statistic (mean and variance estimated) and whether it passes at level alpha."""
    res = stats.anderson(z, "norm")
    levels = np.asarray(res.significance_level) / 100.0
    crit = float(np.interp(alpha, levels[::-1], np.asarray(res.critical_values)[::-1]))
    return float(res.statistic), bool(res.statistic < crit), crit


def clt_experiment(
    model: Model,
    functionals,
    tfs,
    lambdas,
    reps: int,
    seed: int,
    alpha: float = 0.01,
    n_boot: int = 200,
    V: dict | None = None,
    threads: int = 1,
) -> ExperimentResult:
    """Normality of standardised <f, mu_lam>: Anderson-Darling, Kolmogorov distance and its trend in lam.

    With two or more test functions the empirical lam^-1 Cov of the first
    two is compared with tau * V * int f1 f2.
    """
    funcs = dict(_func_items(functionals))
    d = model.dimension
    rows = []
    summary = {"normality": {}, "monotone": {}, "covariance": {}}
    runs = {lam: run_replications(model, funcs, tfs, lam, reps, seed, threads) for lam in lambdas}
    boot_rng = stream(seed, "bootstrap")
    for name, fn in funcs.items():
        for j, f in enumerate(tfs):
            fid = f"{name}:{f.id}"
            ks_list, ks_se = [], []
            for lam in lambdas:
                v = runs[lam].values[name][:, j]
                if v.std() == 0:
                    ad, ok, crit, ks, se = math.nan, False, math.nan, math.nan, math.nan
                else:
                    ad, ok, crit = anderson_normal(v, alpha)
                    ks = ks_distance(v)
                    boots = [ks_distance(v[boot_rng.integers(0, reps, reps)]) for _ in range(n_boot)]
                    se = float(np.std(boots, ddof=1))
                z = (v - v.mean()) / v.std(ddof=1) if v.std() > 0 else v * 0
                ks_list.append(ks)
                ks_se.append(se)
                summary["normality"][(fid, lam)] = {
                    "ad_stat": ad,
                    "ad_critical": crit,
                    "ad_pass": ok,
                    "ks": ks,
                    "ks_boot_se": se,
                    "skewness": float(stats.skew(z)),
                    "excess_kurtosis": float(stats.kurtosis(z)),
                }
                rows.append(
                    {
                        "lambda": lam,
                        "f_id": fid,
                        "n_reps": reps,
                        "mean": float(v.mean()),
                        "variance": float(v.var(ddof=1)),
                        "normalized_stat": float(v.var(ddof=1) / lam),
                        "target": math.nan,
                        "std_error": math.nan,
                        "ad_stat": ad,
                        "ks_dist": ks,
                    }
                )
            ok = all(
                ks_list[i + 1] <= ks_list[i] + 2.0 * math.hypot(ks_se[i], ks_se[i + 1]) for i in range(len(lambdas) - 1)
            )
            summary["monotone"][fid] = {"ks": ks_list, "ks_boot_se": ks_se, "non_increasing": ok}
        if len(tfs) >= 2:
            f1, f2 = tfs[0], tfs[1]
            target = model.tau * V[name] * integral(f1, d, f2) if V is not None and name in V else math.nan
            for lam in lambdas:
                v1 = runs[lam].values[name][:, 0]
                v2 = runs[lam].values[name][:, 1]
                c = np.cov(v1, v2, ddof=1)[0, 1] / lam
                prod = (v1 - v1.mean()) * (v2 - v2.mean())
                summary["covariance"][(name, lam)] = {"cov": float(c), "se": float(prod.std(ddof=1) / math.sqrt(reps) / lam), "target": target}
    summary["runs"] = runs
    return ExperimentResult("clt", rows, summary)


def poisson_quantization_constant(d: int, r: float, tau: float = 1.0) -> float:
    """tau^(-r/d) Gamma(1 + r/d) omega_d^(-r/d): limit of lam^(r/d) <1, mu> on Poisson input."""
    return tau ** (-r / d) * gamma_fn(1.0 + r / d) * ball_volume(d, 1.0) ** (-r / d)


def _radial_cell_moment(Y: np.ndarray, r: float, n_dir: int, d: int) -> float:
    """int |y|^r over {y : B_|y|(y) contains no point of Y}, by directions and exact radial integral."""
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        wts = np.ones(2)
    elif d == 2:
        t = 2 * math.pi * (np.arange(n_dir) + 0.5) / n_dir
        dirs = np.column_stack([np.cos(t), np.sin(t)])
        wts = np.full(n_dir, 2 * math.pi / n_dir)
    else:
        i = np.arange(n_dir) + 0.5
        z = 1 - 2 * i / n_dir
        phi = math.pi * (3 - math.sqrt(5)) * i
        s = np.sqrt(1 - z * z)
        dirs = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
        wts = np.full(n_dir, 4 * math.pi / n_dir)
    if len(Y) == 0:
        return math.inf
    proj = dirs @ Y.T  # (n_dir, m)
    sq = np.sum(Y * Y, axis=1)
    with np.errstate(divide="ignore"):
        reach = np.where(proj > 0, sq[None, :] / (2.0 * np.where(proj > 0, proj, 1.0)), np.inf)
    R = reach.min(axis=1)
    if np.any(~np.isfinite(R)):
        return math.inf
    return float(np.sum(wts * R ** (r + d) / (r + d)))


def quantization_bound(model: Model, r: float, reps: int, seed: int, density=None, rho: float | None = None, n_dir: int = 2048, probes_per_axis: int = 3, threads: int = 1) -> dict:
    """Upper bound tau E[M] / ||h||_{d/(d+r)} on the quantization coefficient.

    E[M] = E[exp(-add_one(0, P)) int_{y : B_|y|(y) ∩ P = ∅} |y|^r dy] is
    estimated by probe insertion, integrating along rays from the probe.
    The Poisson value at the realised intensity is reported next to it.
    """
    d = model.dimension
    rho = rho or default_probe_radius(model) + 2.0 * model.tau ** (-1.0 / d)
    centres, window = _probe_centres(d, rho, probes_per_axis)
    origin = np.zeros(d)

    def work(rep):
        s = model.sample(window, seed, ("M", rep))
        X = s.points
        vals, ws = [], []
        for p in centres:
            Y, _ = _local(X, None, p, rho)
            w = math.exp(-model.potential.add_one(origin, Y))
            vals.append(w * _radial_cell_moment(Y, r, n_dir, d) if w > 0 else 0.0)
            ws.append(w)
        return float(np.mean(vals)), float(np.mean(ws)), len(X) / window.volume

    per = _map(work, reps, threads)
    EM = float(per[:, 0].mean())
    EM_se = float(per[:, 0].std(ddof=1) / math.sqrt(reps))
    if density is None or density.is_uniform:
        hnorm = 1.0
    else:
        q = d / (d + r)
        hnorm = integral(lambda z: density(z) ** q, d) ** (1.0 / q)
    bound = model.tau * EM / hnorm
    bound_se = model.tau * EM_se / hnorm
    intensity = float(per[:, 2].mean())
    poisson = poisson_quantization_constant(d, r, intensity) / hnorm
    if abs(bound - poisson) <= 3.0 * bound_se:
        verdict = "inconclusive"
    else:
        verdict = "below_poisson" if bound < poisson else "above_poisson"
    return {
        "bound": bound,
        "std_error": bound_se,
        "E_M": EM,
        "intensity": intensity,
        "acceptance": float(per[:, 1].mean()),
        "poisson_bound_same_intensity": poisson,
        "h_norm": hnorm,
        "comparison": verdict,
        "reps": reps,
    }
