"""Perfect simulation of Gibbs point processes via free birth-death trajectories."""
from .diagnostics import (
    SurvivalFit,
    clan_statistics,
    empty_ball_fit,
    empty_ball_probabilities,
    log_survival_fit,
    poisson_empty_ball,
)
from .oracles import InfeasibleOracleError, OrderDependenceError, forward_dynamics_sample, rejection_sample
from .perfect import ClanExplosionError, PerfectSample, SampleReport, default_margin, perfect_sample
from .resolve import ACCEPTED, REJECTED, UNDETERMINED, EnvelopeError, Resolution, resolve_statuses
from .trajectory import Trajectory, extend_backward, sample_free_trajectory

__all__ = [
    "ACCEPTED",
    "REJECTED",
    "UNDETERMINED",
    "ClanExplosionError",
    "EnvelopeError",
    "InfeasibleOracleError",
    "OrderDependenceError",
    "PerfectSample",
    "Resolution",
    "SampleReport",
    "SurvivalFit",
    "Trajectory",
    "clan_statistics",
    "default_margin",
    "empty_ball_fit",
    "empty_ball_probabilities",
    "extend_backward",
    "forward_dynamics_sample",
    "log_survival_fit",
    "perfect_sample",
    "poisson_empty_ball",
    "rejection_sample",
    "resolve_statuses",
    "sample_free_trajectory",
]
