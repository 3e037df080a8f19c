"""One test per acceptance criterion; each records a single PASS/FAIL line."""
import json
import math

import numpy as np
import pytest
from scipy import stats

from gibbsgeom.cli import main
from gibbsgeom.estimators import (
    Model,
    TestFunction,
    clt_experiment,
    estimate_E,
    estimate_V,
    poisson_quantization_constant,
    run_replications,
    variance_experiment,
    wlln_experiment,
)
from gibbsgeom.functionals import (
    RSA,
    Count,
    KNNLength,
    PercolationComponents,
    Quantization,
    component_reciprocals,
    knn_edge_lengths,
    quantization_values,
    rsa_pack,
    stabilization_radii,
)
from gibbsgeom.geometry import Window
from gibbsgeom.potentials import HardCorePotential, NullPotential, StraussPotential
from gibbsgeom.sampler import clan_statistics, empty_ball_fit, log_survival_fit, perfect_sample, rejection_sample
from test_functionals import (
    brute_knn_edges,
    brute_rsa,
    extrapolated_cell_moment,
    grid_cell_moment,
    halfspace_cell,
    union_find_components,
)
from test_sampler import poisson_chi2_pvalue, tv_distance

# hard-core with tau (2r)^2 = 0.2 at tau = 1, and a Strauss process with the same range
HC = HardCorePotential(2, math.sqrt(0.2) / 2)
STRAUSS = StraussPotential(2, 1.0, math.sqrt(0.2))
HC_MODEL = Model(2, 1.0, HC)
ONE = [TestFunction()]


def test_c1_poisson_cell_counts(acceptance):
    tau, w = 1.0, Window(2.0, 2)
    samples = [perfect_sample(w, tau, NullPotential(2), seed=101, key=(i,)).points for i in range(1000)]
    # 2 x 2 partition of the window into cells of volume 4
    pvals = []
    for lo_x in (-2.0, 0.0):
        for lo_y in (-2.0, 0.0):
            counts = [int(np.sum((X[:, 0] >= lo_x) & (X[:, 0] < lo_x + 2) & (X[:, 1] >= lo_y) & (X[:, 1] < lo_y + 2))) for X in samples]
            pvals.append(poisson_chi2_pvalue(counts, tau * 4.0))
    total = poisson_chi2_pvalue([len(X) for X in samples], tau * w.volume)
    ok = min(pvals) > 0.01 and total > 0.01
    acceptance("C1 Poisson cell counts", ok, f"cell p-values {np.round(pvals, 3).tolist()}, whole-window p={total:.3f} (need > 0.01)")
    assert ok


@pytest.mark.parametrize("name, potential", [("hard-core", HC), ("Strauss", STRAUSS)])
def test_c2_oracle_equivalence(acceptance, name, potential):
    n = 100_000
    w = Window.from_volume(5.0, 2)
    perfect = [len(perfect_sample(w, 1.0, potential, seed=201, key=(i,)).points) for i in range(n)]
    rej, proposals = rejection_sample(w, 1.0, potential, seed=202, n_samples=n)
    tv = tv_distance(perfect, [len(X) for X in rej])
    ok = tv < 0.02
    acceptance(f"C2 oracle equivalence ({name})", ok, f"count-law TV = {tv:.4f} at 1e5 samples each (need < 0.02); acceptance rate {n / proposals:.3f}")
    assert ok


@pytest.mark.parametrize("d, r", [(1, 1.0), (2, 1.0), (2, 2.0)])
def test_c3_quantization_constants(acceptance, d, r):
    lam, reps = 1e4, 30
    model = Model(d, 1.0, NullPotential(d))
    run = run_replications(model, {"q": Quantization(r)}, ONE, lam, reps, seed=301)
    # quantization values live on the raw lam-scale, so lam^-1 <1, mu> equals
    # lam^(r/d) <1, mu> in unit-cube coordinates
    v = run.values["q"][:, 0] / lam
    want = poisson_quantization_constant(d, r, 1.0)
    rel = abs(v.mean() - want) / want
    ok = rel < 0.05
    acceptance(f"C3 quantization constant (d={d}, r={r:g})", ok, f"{v.mean():.4f} +- {v.std(ddof=1) / math.sqrt(reps):.4f} vs {want:.4f}, relative error {rel:.2%} (need < 5%)")
    assert ok


@pytest.mark.parametrize("name, fn", [("k-NN length", KNNLength(1)), ("RSA", RSA())])
def test_c4_wlln_consistency(acceptance, name, fn):
    lam, reps = 1000.0, 200
    E = estimate_E(HC_MODEL, fn, reps=600, seed=401)
    res = wlln_experiment(HC_MODEL, {"f": fn}, ONE, [lam], reps, seed=402, E={"f": E.value})
    row = res.rows[0]
    se = math.hypot(row["std_error"], HC_MODEL.tau * E.std_error)
    z = abs(row["normalized_stat"] - row["target"]) / se
    ok = z < 3
    acceptance(f"C4 WLLN ({name})", ok, f"lam^-1 mean {row['normalized_stat']:.4f} vs tau E {row['target']:.4f}: {z:.2f} combined SE (need < 3)")
    assert ok


def test_c5_variance_scaling(acceptance):
    lambdas = [128.0, 256.0, 512.0, 1024.0]
    gibbs = variance_experiment(HC_MODEL, {"count": Count(), "knn": KNNLength(1)}, ONE, lambdas, 1500, seed=501)
    r2_count = gibbs.summary["fits"]["count:constant"]["r2"]
    r2_knn = gibbs.summary["fits"]["knn:constant"]["r2"]
    poisson = variance_experiment(Model(2, 1.0, NullPotential(2)), {"count": Count()}, ONE, lambdas, 1500, seed=502)
    fit = poisson.summary["fits"]["count:constant"]
    z = abs(fit["slope"] - 1.0) / fit["slope_se"]
    ok = r2_count > 0.99 and r2_knn > 0.99 and z < 3
    acceptance(
        "C5 variance scaling",
        ok,
        f"hard-core R^2 count {r2_count:.4f}, k-NN {r2_knn:.4f} (need > 0.99); Poisson slope {fit['slope']:.4f} +- {fit['slope_se']:.4f} vs tau = 1 ({z:.2f} SE, need < 3)",
    )
    assert ok


def test_c6_variance_estimator_cross_check(acceptance):
    V = estimate_V(HC_MODEL, Count(), reps=400, seed=601)
    res = variance_experiment(HC_MODEL, {"count": Count()}, ONE, [64.0, 128.0, 256.0], 3000, seed=602)
    fit = res.summary["fits"]["count:constant"]
    z = stats.norm.ppf(0.975)
    a = (HC_MODEL.tau * (V.value - z * V.std_error), HC_MODEL.tau * (V.value + z * V.std_error))
    b = (fit["slope"] - z * fit["slope_se"], fit["slope"] + z * fit["slope_se"])
    ok = a[0] <= b[1] and b[0] <= a[1]
    acceptance("C6 V estimator vs direct slope", ok, f"tau V 95% CI [{a[0]:.3f}, {a[1]:.3f}] vs Var/lam slope CI [{b[0]:.3f}, {b[1]:.3f}] (need overlap)")
    assert ok


def test_c7_clt(acceptance):
    funcs = {"count": Count(), "knn": KNNLength(1), "percolation": PercolationComponents(1.0)}
    res = clt_experiment(HC_MODEL, funcs, ONE, [100.0, 1000.0, 10000.0], 1000, seed=701, alpha=0.01, n_boot=200)
    norm, mono = res.summary["normality"], res.summary["monotone"]
    parts, ok = [], True
    for name in funcs:
        fid = f"{name}:constant"
        ad = norm[(fid, 1000.0)]
        ks = mono[fid]["ks"]
        good = ad["ad_pass"] and mono[fid]["non_increasing"]
        ok &= good
        parts.append(f"{name}: AD {ad['ad_stat']:.3f} (crit {ad['ad_critical']:.3f}), KS {' > '.join(f'{k:.4f}' for k in ks)}")
    acceptance("C7 CLT", ok, "; ".join(parts))
    assert ok


def test_c8_localization_diagnostics(acceptance):
    w = Window.from_volume(400.0, 2)
    grid = np.linspace(0.05, 4.0, 80)
    parts, ok = [], True
    for name, p in [("hard-core", HC), ("Strauss", STRAUSS)]:
        clans = clan_statistics(w, 1.0, p, seed=801, n_samples=10, core_fraction=0.6)
        cfit = log_survival_fit(clans["diameter"])
        samples, radii = [], []
        for rep in range(10):
            X = perfect_sample(w, 1.0, p, seed=802, key=(rep,), mode="thermodynamic").points
            samples.append(X)
            core = np.flatnonzero(np.all(np.abs(X) <= w.half_width - grid.max(), axis=1))[:60]
            radii.append(stabilization_radii(KNNLength(1), X, core, grid))
        radii = np.concatenate(radii)
        sfit = log_survival_fit(radii[np.isfinite(radii)])
        eb = empty_ball_fit(samples, w, np.linspace(0.2, 1.5, 10))
        good = (
            cfit is not None
            and cfit.slope < 0
            and cfit.r2 > 0.9
            and sfit is not None
            and sfit.slope < 0
            and sfit.r2 > 0.9
            and eb is not None
            and eb[0] < 0
        )
        ok &= good
        parts.append(
            f"{name}: clan slope {cfit.slope:.2f} R^2 {cfit.r2:.3f}, stabilization slope {sfit.slope:.2f} R^2 {sfit.r2:.3f}"
            f" ({int(np.sum(~np.isfinite(radii)))} unresolved of {len(radii)}), empty-ball slope {eb[0]:.2f}"
        )
    acceptance("C8 localization diagnostics", ok, "; ".join(parts))
    assert ok


def test_c9_functional_oracles(acceptance):
    rng = np.random.default_rng(901)
    w = Window.from_volume(1000.0 / 0.6, 2)
    pts = w.uniform(rng, 1000)
    marks = rng.random(1000)
    checks = {}
    checks["RSA"] = np.array_equal(rsa_pack(pts, marks), brute_rsa(pts, marks))
    edges = brute_knn_edges(pts, 1)
    want_len = math.fsum(np.linalg.norm(pts[a] - pts[b]) for a, b in edges)
    got_len = knn_edge_lengths(pts, 1)[0].sum()
    checks["k-NN length"] = abs(got_len - want_len) <= 1e-9 * want_len
    _, recip = union_find_components(1000, edges)
    checks["k-NN components"] = np.array_equal(component_reciprocals(pts, "knn", k=1), recip)
    D = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    _, recip = union_find_components(1000, list(zip(*np.nonzero(np.triu(D <= 1.0, 1)))))
    checks["percolation components"] = np.array_equal(component_reciprocals(pts, "percolation", radius=1.0), recip)
    # quantization against a dense grid in d = 2 and d = 3
    worst = 0.0
    for d, n_pts in ((2, 40), (3, 30)):
        qw = Window(1.5, d)
        q = qw.uniform(rng, n_pts)
        got = quantization_values(q, 1.0, qw)
        for i in range(0, n_pts, 6):
            V = halfspace_cell(i, q, qw.lower, qw.upper)
            want = grid_cell_moment(V, 1.0) if d == 2 else extrapolated_cell_moment(V, 1.0, n=100)
            worst = max(worst, abs(got[i] - want) / want)
    checks["quantization"] = worst < 1e-4
    ok = all(checks.values())
    detail = ", ".join(f"{k} {'matches' if v else 'MISMATCH'}" for k, v in checks.items() if k != "quantization")
    acceptance("C9 functional oracles", ok, f"{detail}; quantization worst relative error {worst:.1e} (need < 1e-4)")
    assert ok


def test_c10_determinism_across_threads(acceptance, tmp_path):
    base = {"tau": 1.0, "potential": {"type": "hardcore", "r": HC.r}, "seed": 1001, "lambdas": [50.0, 100.0]}
    runs = {
        "sample": ("sample", {**base, "reps": 5}, "points.csv"),
        "estimate": ("estimate", {**base, "reps": 8, "functionals": ["count", {"functional": "knn_length"}], "estimate": {"target": "V"}}, "estimates.csv"),
        "wlln": ("experiment", {**base, "reps": 16, "experiment": "wlln", "functionals": ["count", "rsa"]}, "results.csv"),
        "variance": ("experiment", {**base, "reps": 16, "experiment": "variance", "functional": "knn_length"}, "results.csv"),
        "clt": ("experiment", {**base, "reps": 16, "experiment": "clt", "functional": "percolation_components", "n_boot": 20}, "results.csv"),
        "quantization_bound": ("experiment", {**base, "reps": 4, "experiment": "quantization_bound", "functional": {"functional": "quantization", "r": 1.0}}, "results.csv"),
        "diagnose": ("diagnose", {**base, "reps": 2, "lambdas": [100.0], "functional": "knn_length"}, "clans.csv"),
    }
    same = {}
    for label, (command, cfg, artifact) in runs.items():
        path = tmp_path / f"{label}.json"
        path.write_text(json.dumps(cfg))
        blobs = []
        for threads in (1, 8):
            out = tmp_path / f"{label}-{threads}"
            assert main([command, "-c", str(path), "--threads", str(threads), "--out-dir", str(out)]) == 0
            blobs.append([p.read_bytes() for p in sorted(out.glob("*.csv"))])
        assert (tmp_path / f"{label}-1" / artifact).exists()
        same[label] = blobs[0] == blobs[1]
    ok = all(same.values())
    acceptance("C10 determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()) + " (threads 1 vs 8)")
    assert ok
