"""Independent reference samplers used to check the perfect sampler."""
from __future__ import annotations

import math

import numpy as np

from ..geometry import Window
from ..potentials import AreaInteractionPotential, Potential
from ..rng import stream


class InfeasibleOracleError(RuntimeError):
    """The rejection oracle's acceptance rate is too small to be useful."""


class OrderDependenceError(RuntimeError):
    """Psi changed when the same configuration was summed in another order."""


def _order_tolerance(potential: Potential) -> float:
    if isinstance(potential, AreaInteractionPotential) and potential.dimension == 3:
        return 5e-3
    return 1e-9


def rejection_sample(
    window: Window,
    tau: float,
    potential: Potential,
    seed: int,
    n_samples: int,
    max_proposals: int = 10**7,
    key: tuple = (),
):
    """Draw Poisson(tau) configurations and keep each with probability exp(-Psi).

    Psi is summed in two orders on every proposal as a consistency check.
    Returns (list of configurations, number of proposals).
    """
    rng = stream(seed, *key, "rejection")
    tol = _order_tolerance(potential)
    out = []
    proposals = 0
    while len(out) < n_samples:
        if proposals >= max_proposals:
            rate = len(out) / proposals
            raise InfeasibleOracleError(
                f"acceptance rate {rate:.3g} after {proposals} proposals; the oracle cannot deliver {n_samples} samples"
            )
        proposals += 1
        n = rng.poisson(tau * window.volume)
        X = window.uniform(rng, n)
        e1 = potential.energy(X)
        e2 = potential.energy(X[::-1])
        if not (e1 == e2 or (math.isfinite(e1) and abs(e1 - e2) <= tol * (1.0 + abs(e1)))):
            raise OrderDependenceError(f"Psi depends on summation order: {e1} vs {e2}")
        if rng.random() < math.exp(-e1):
            out.append(X)
    return out, proposals


def forward_dynamics_sample(
    window: Window,
    tau: float,
    potential: Potential,
    seed: int,
    n_samples: int,
    burn_in: float = 20.0,
    spacing: float = 5.0,
    key: tuple = (),
):
    """Spatial birth-death chain run forward (Gillespie); states recorded every ``spacing``.

    Births are proposed at rate tau*vol and accepted with probability
    exp(-add_one); each point dies at rate 1.
    """
    rng = stream(seed, *key, "forward")
    d = window.dimension
    X = np.zeros((0, d))
    t = 0.0
    birth_rate = tau * window.volume
    out = []
    next_record = burn_in
    while len(out) < n_samples:
        total = birth_rate + len(X)
        dt = rng.exponential(1.0 / total)
        while t + dt >= next_record and len(out) < n_samples:
            out.append(X.copy())
            next_record += spacing
        t += dt
        if rng.random() * total < birth_rate:
            x = window.uniform(rng, 1)[0]
            if rng.random() < math.exp(-potential.add_one(x, X)):
                X = np.vstack([X, x])
        else:
            X = np.delete(X, rng.integers(len(X)), axis=0)
    return out
