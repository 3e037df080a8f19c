"""Voronoi quantization distortion of Poisson and hard-core input against the closed-form Poisson constant.

Run: python3 demos/quantization.py
"""
import math

from gibbsgeom.estimators import Model, TestFunction, poisson_quantization_constant, quantization_bound, run_replications
from gibbsgeom.functionals import Quantization
from gibbsgeom.potentials import HardCorePotential, NullPotential

lam = 2000.0
for r in (1.0, 2.0):
    for name, model in [("Poisson", Model(2, 1.0, NullPotential(2))), ("hard-core", Model(2, 1.0, HardCorePotential(2, math.sqrt(0.2) / 2)))]:
        run = run_replications(model, {"q": Quantization(r)}, [TestFunction()], lam, 10, seed=1)
        v = run.values["q"][:, 0] / lam
        bound = quantization_bound(model, r, reps=40, seed=2)
        print(f"r={r:g}  {name:9s}  lam^-1 sum of cell moments {v.mean():.4f},"
              f" insertion bound {bound['bound']:.4f} +- {bound['std_error']:.4f}"
              f" (Poisson at the same intensity {bound['poisson_bound_same_intensity']:.4f}: {bound['comparison']})")
    print(f"       Poisson constant Gamma(1 + r/d) omega_d^(-r/d) = {poisson_quantization_constant(2, r):.4f}")
