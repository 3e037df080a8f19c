"""Insertion estimates of the mean constant E, checked against lam^-1 <1, mu_lam> on growing windows.

Run: python3 demos/limit_constants.py
"""
import math

from gibbsgeom.estimators import Model, TestFunction, estimate_E, estimate_V, wlln_experiment
from gibbsgeom.functionals import Count, KNNLength
from gibbsgeom.potentials import HardCorePotential

model = Model(2, 1.0, HardCorePotential(2, math.sqrt(0.2) / 2))
funcs = {"count": Count(), "knn": KNNLength(1)}
E = {name: estimate_E(model, fn, reps=150, seed=1) for name, fn in funcs.items()}
for name, est in E.items():
    print(f"E[{name}] = {est.value:.4f} +- {est.std_error:.4f}")

res = wlln_experiment(model, funcs, [TestFunction()], [100.0, 400.0, 1600.0], reps=40, seed=2, E={k: v.value for k, v in E.items()})
print("\nlambda  functional          lam^-1 mean        tau E")
for row in res.rows:
    print(f"{row['lambda']:6g}  {row['f_id']:18s}  {row['normalized_stat']:.4f} +- {row['std_error']:.4f}  {row['target']:.4f}")

V = estimate_V(model, Count(), reps=60, seed=3)
print(f"\nV[count] = {V.value:.3f} +- {V.std_error:.3f} (Poisson input would give 1)")
