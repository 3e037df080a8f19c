"""Perfect samples of a hard-core and a Strauss process, checked against rejection sampling.

Run: python3 demos/perfect_sampling.py
"""
import math

import numpy as np

from gibbsgeom.geometry import Window
from gibbsgeom.potentials import HardCorePotential, StraussPotential
from gibbsgeom.sampler import perfect_sample, rejection_sample

window = Window.from_volume(5.0, 2)
n = 5000
for name, potential in [("hard-core", HardCorePotential(2, math.sqrt(0.2) / 2)), ("Strauss", StraussPotential(2, 1.0, math.sqrt(0.2)))]:
    samples = [perfect_sample(window, 1.0, potential, seed=1, key=(i,)) for i in range(n)]
    counts = np.array([len(s.points) for s in samples])
    horizons = np.array([s.report.horizon_used for s in samples])
    oracle, proposals = rejection_sample(window, 1.0, potential, seed=2, n_samples=n)
    ref = np.array([len(X) for X in oracle])
    print(f"{name:9s}  mean count {counts.mean():.3f} (rejection {ref.mean():.3f}),"
          f" largest horizon {horizons.max():g}, rejection acceptance {n / proposals:.3f}")

# one larger sample, with its clan report
s = perfect_sample(Window.from_volume(400.0, 2), 1.0, HardCorePotential(2, math.sqrt(0.2) / 2), seed=3, mode="thermodynamic")
r = s.report
print(f"\n{r.n_points} points on volume 400; horizon {r.horizon_used:g} after {r.extension_count} doublings;"
      f" largest clan {r.max_clan_size} births, diameter {r.max_clan_diameter:.2f}")
