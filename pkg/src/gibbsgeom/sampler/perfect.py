"""Perfect samples of Gibbs processes by backward extension of a free trajectory."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..geometry import Window
from ..potentials import Potential
from ..rng import stream
from .resolve import UNDETERMINED, ACCEPTED, resolve_statuses
from .trajectory import extend_backward, sample_free_trajectory

DEFAULT_T0 = 5.0
DEFAULT_TMAX = 640.0


class ClanExplosionError(RuntimeError):
    """Some present point stayed undetermined up to the maximal horizon."""

    def __init__(self, horizon: float, undetermined: int):
        super().__init__(
            f"{undetermined} present points still undetermined at horizon {horizon:g}; "
            "the clan of ancestors does not terminate fast enough for these parameters"
        )
        self.horizon = horizon
        self.undetermined = undetermined


@dataclass
class SampleReport:
    horizon_used: float
    max_clan_diameter: float
    max_clan_size: int
    extension_count: int
    seed: int
    key: tuple = ()
    n_points: int = 0
    mode: str = "finite"
    margin: float = 0.0
    boundary_hits: int = 0
    residual_bound: float = 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["key"] = list(self.key)
        return out


@dataclass
class PerfectSample:
    points: np.ndarray
    report: SampleReport
    trajectory: object = None
    resolution: object = None
    roots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


_MARGIN_CACHE: dict = {}


def default_margin(potential: Potential, tau: float, survival: float = 1e-4, seed: int = 0) -> float:
    """Window margin at which the fitted clan-diameter survival drops below ``survival``.

    Cached per (potential, tau).  Zero for the Poisson case.
    """
    from .diagnostics import clan_statistics, log_survival_fit

    if potential.interaction_range == 0.0:
        return 0.0
    key = (repr(potential), float(tau), float(survival), int(seed))
    if key not in _MARGIN_CACHE:
        d = potential.dimension
        window = Window.from_volume(2000.0 / tau, d)
        stats = clan_statistics(window, tau, potential, seed=seed, n_samples=3, core_fraction=0.5)
        diam = stats["diameter"]
        fit = log_survival_fit(diam)
        if fit is not None and fit.slope < 0:
            margin = (math.log(survival) - fit.intercept) / fit.slope
        else:
            margin = float(np.max(diam)) if len(diam) else 0.0
        _MARGIN_CACHE[key] = float(max(margin, np.max(diam) if len(diam) else 0.0))
    return _MARGIN_CACHE[key]


def perfect_sample(
    window: Window,
    tau: float,
    potential: Potential,
    seed: int = 0,
    key: tuple = (),
    *,
    T0: float = DEFAULT_T0,
    T_max: float = DEFAULT_TMAX,
    mode: str = "finite",
    margin: float | None = None,
    engine: str = "auto",
    clans: bool = True,
    keep: bool = False,
) -> PerfectSample:
    """Exact draw of the Gibbs process on ``window``.

    ``mode="finite"`` samples the process on the window itself.
    ``mode="thermodynamic"`` simulates on the window enlarged by ``margin``
    and returns the points inside ``window``, approximating the restriction
    of the infinite-volume process; the report records the margin and how
    many clans came close to it.
    """
    if potential.dimension != window.dimension:
        raise ValueError("potential and window dimensions differ")
    if not (0 < T0 <= T_max):
        raise ValueError("need 0 < T0 <= T_max")
    if mode not in ("finite", "thermodynamic"):
        raise ValueError(f"unknown boundary mode {mode!r}")
    key = tuple(key)
    if mode == "thermodynamic":
        if margin is None:
            margin = default_margin(potential, tau)
        sim = window.enlarged(margin)
    else:
        margin = 0.0
        sim = window
    traj = sample_free_trajectory(sim, tau, T0, stream(seed, *key, "initial"), seed_state=(seed, *key))
    ext = 0
    while True:
        res = resolve_statuses(traj, potential, engine=engine)
        roots = np.flatnonzero(traj.alive_at(0.0))
        if mode == "thermodynamic":
            roots = roots[window.contains(traj.positions[roots])]
        undetermined = int(np.sum(res.status[roots] == UNDETERMINED))
        if undetermined == 0:
            break
        if 2.0 * traj.horizon > T_max:
            raise ClanExplosionError(traj.horizon, undetermined)
        ext += 1
        traj = extend_backward(traj, traj.horizon, stream(seed, *key, "extend", ext))
    accepted = roots[res.status[roots] == ACCEPTED]
    points = traj.positions[accepted]
    max_diam, max_size, hits = 0.0, 1 if len(roots) else 0, 0
    if clans and len(roots) and potential.interaction_range != 0.0:
        sizes, diams, _ = res.clan_stats(traj, roots)
        max_diam, max_size = float(diams.max()), int(sizes.max())
        if mode == "thermodynamic":
            hits = int(np.sum(diams >= margin)) if margin > 0 else int(np.sum(diams > 0))
    report = SampleReport(
        horizon_used=float(traj.horizon),
        max_clan_diameter=max_diam,
        max_clan_size=max_size,
        extension_count=ext,
        seed=int(seed),
        key=key,
        n_points=int(len(points)),
        mode=mode,
        margin=float(margin),
        boundary_hits=hits,
        residual_bound=float(hits) / max(len(roots), 1),
    )
    out = PerfectSample(points, report)
    if keep:
        out.trajectory, out.resolution, out.roots = traj, res, roots
    return out
