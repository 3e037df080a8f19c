"""Tail diagnostics: clan sizes, log-survival fits and empty-ball probabilities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Window, ball_volume
from ..potentials import Potential
from .perfect import perfect_sample


@dataclass
class SurvivalFit:
    slope: float
    intercept: float
    r2: float
    x: np.ndarray
    log_survival: np.ndarray

    @property
    def decays(self) -> bool:
        return self.slope < 0


def log_survival_fit(values, transform=None, min_exceedances: int = 10, n_grid: int = 25):
    """Weighted least-squares line through the log empirical survival function.

    The fit uses the upper half of the range where at least ``min_exceedances``
    observations lie above the threshold (the half is taken above any atom at
    the minimum); weights n S / (1 - S) are the
    inverse delta-method variances of log S.  ``transform`` maps thresholds to
    the regressor (e.g. r -> r**d).  Returns None with fewer than three usable
    thresholds.
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    if n < 2 * min_exceedances:
        return None
    upper = v[n - min_exceedances - 1]
    # an atom at the minimum (e.g. singleton clans of diameter 0) is not part of the tail
    above = v[v > v[0]]
    lower = float(np.median(above if 0 < len(above) < n - 1 else v))
    if not upper > lower:
        return None
    grid = np.linspace(lower, upper, n_grid)
    S = (n - np.searchsorted(v, grid, side="right")) / n
    keep = (S > 0) & (S < 1)
    grid, S = grid[keep], S[keep]
    if len(np.unique(S)) < 3:
        return None
    x = transform(grid) if transform is not None else grid
    y = np.log(S)
    w = n * S / (1.0 - S)
    W = w.sum()
    xm, ym = np.sum(w * x) / W, np.sum(w * y) / W
    sxx = np.sum(w * (x - xm) ** 2)
    sxy = np.sum(w * (x - xm) * (y - ym))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    syy = np.sum(w * (y - ym) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / syy if syy > 0 else 0.0
    return SurvivalFit(float(slope), float(intercept), float(r2), x, y)


def clan_statistics(window: Window, tau: float, potential: Potential, seed: int, n_samples: int, core_fraction: float = 1.0, **kwargs):
    """Clan size, diameter and time depth of present points over several samples.

    Only roots within ``core_fraction`` of the half-width are kept, to limit
    the effect of the window boundary.
    """
    sizes, diams, depths, horizons = [], [], [], []
    for rep in range(n_samples):
        s = perfect_sample(window, tau, potential, seed, ("clans", rep), keep=True, **kwargs)
        traj, res, roots = s.trajectory, s.resolution, s.roots
        inner = np.all(np.abs(traj.positions[roots]) <= core_fraction * window.half_width, axis=1)
        sz, dm, dp = res.clan_stats(traj, roots[inner])
        sizes.append(sz)
        diams.append(dm)
        depths.append(dp)
        horizons.append(s.report.horizon_used)
    return {
        "size": np.concatenate(sizes),
        "diameter": np.concatenate(diams),
        "depth": np.concatenate(depths),
        "horizon": np.array(horizons),
    }


def empty_ball_probabilities(samples, window: Window, radii, probes_per_axis: int = 3):
    """Fraction of probe balls of each radius that contain no sample point.

    Probe centres sit on a small lattice kept at distance max(radii) from the
    window boundary.
    """
    radii = np.asarray(radii, dtype=float)
    d = window.dimension
    inner = window.half_width - radii.max()
    if inner < 0:
        raise ValueError("largest radius does not fit in the window")
    ticks = np.linspace(-inner, inner, probes_per_axis) if probes_per_axis > 1 else np.zeros(1)
    centres = np.stack(np.meshgrid(*[ticks] * d, indexing="ij"), axis=-1).reshape(-1, d)
    empty = np.zeros(len(radii))
    total = 0
    for X in samples:
        if len(X):
            nearest = np.min(np.linalg.norm(X[None, :, :] - centres[:, None, :], axis=2), axis=1)
        else:
            nearest = np.full(len(centres), np.inf)
        empty += np.sum(nearest[:, None] > radii[None, :], axis=0)
        total += len(centres)
    return empty / total


def empty_ball_fit(samples, window: Window, radii, min_count: int = 10):
    """Linear fit of log P(empty ball) against r**d; returns (slope, intercept, r2, probs)."""
    radii = np.asarray(radii, dtype=float)
    p = empty_ball_probabilities(samples, window, radii)
    d = window.dimension
    keep = p > 0
    x = radii[keep] ** d
    y = np.log(p[keep])
    if len(x) < 3:
        return None
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    r2 = 1.0 - np.sum(resid**2) / np.sum((y - y.mean()) ** 2)
    return float(coef[1]), float(coef[0]), float(r2), p


def poisson_empty_ball(tau: float, d: int, r) -> np.ndarray:
    return np.exp(-tau * ball_volume(d, 1.0) * np.asarray(r, dtype=float) ** d)
