"""Free birth-death trajectories on a window, looking back from time 0.

Births arrive at rate tau per unit volume and time, lifetimes are Exp(1), so
the process is stationary with Poisson(tau) marginals.  A trajectory with
horizon T holds every point whose death time lies in (-T, inf): the points
alive at -T (with their true ages) plus all births in [-T, 0].  Points born
before -T have an incomplete ancestry and can never be resolved at this
horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Window


@dataclass
class Trajectory:
    window: Window
    tau: float
    horizon: float
    positions: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    eta_u: np.ndarray  # uniforms turned into trimming radii by the potential
    u: np.ndarray  # acceptance uniforms
    segments: int = 1
    seed_state: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.birth)

    def alive_at(self, t: float) -> np.ndarray:
        return (self.birth <= t) & (self.death > t)

    @property
    def initial(self) -> np.ndarray:
        """Points born before the horizon (ancestry unknown)."""
        return self.birth < -self.horizon


def _validate(window: Window, tau: float, T: float):
    if not (tau > 0 and np.isfinite(tau)):
        raise ValueError("intensity tau must be positive and finite")
    if not (T >= 0 and np.isfinite(T)):
        raise ValueError("horizon must be non-negative and finite")


def sample_free_trajectory(window: Window, tau: float, T: float, rng: np.random.Generator, seed_state=()) -> Trajectory:
    """Free process on ``window`` over [-T, 0]."""
    _validate(window, tau, T)
    d = window.dimension
    vol = window.volume
    n0 = rng.poisson(tau * vol)
    pos0 = window.uniform(rng, n0)
    age = rng.exponential(1.0, n0)
    residual = rng.exponential(1.0, n0)
    n1 = rng.poisson(tau * vol * T) if T > 0 else 0
    pos1 = window.uniform(rng, n1)
    b1 = rng.uniform(-T, 0.0, n1) if T > 0 else np.zeros(0)
    life1 = rng.exponential(1.0, n1)
    n = n0 + n1
    return Trajectory(
        window=window,
        tau=float(tau),
        horizon=float(T),
        positions=np.vstack([pos0, pos1]).reshape(n, d),
        birth=np.concatenate([-T - age, b1]),
        death=np.concatenate([-T + residual, b1 + life1]),
        eta_u=rng.random(n),
        u=rng.random(n),
        segments=1,
        seed_state=tuple(seed_state),
    )


def extend_backward(traj: Trajectory, dT: float, rng: np.random.Generator) -> Trajectory:
    """Push the horizon from T to T + dT without touching existing points.

    The new points are exactly those that die in (-T - dT, -T]: their death
    times are uniform on that interval and, by time reversal, their ages at
    death are independent Exp(1).
    """
    if not dT > 0:
        raise ValueError("extension length must be positive")
    T = traj.horizon
    window = traj.window
    m = rng.poisson(traj.tau * window.volume * dT)
    pos = window.uniform(rng, m)
    death = rng.uniform(-T - dT, -T, m)
    birth = death - rng.exponential(1.0, m)
    return Trajectory(
        window=window,
        tau=traj.tau,
        horizon=T + dT,
        positions=np.vstack([traj.positions, pos]),
        birth=np.concatenate([traj.birth, birth]),
        death=np.concatenate([traj.death, death]),
        eta_u=np.concatenate([traj.eta_u, rng.random(m)]),
        u=np.concatenate([traj.u, rng.random(m)]),
        segments=traj.segments + 1,
        seed_state=traj.seed_state,
    )
