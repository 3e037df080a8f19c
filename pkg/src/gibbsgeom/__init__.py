"""Perfect simulation of Gibbs point processes and Monte Carlo checks of limit theorems for stabilizing functionals."""
from .geometry import Window, ball_volume
from .potentials import potential_from_dict
from .functionals import functional_from_dict
from .sampler import perfect_sample
from .estimators import Model, TestFunction, build_measure, estimate_E, estimate_V

__version__ = "0.1.0"

__all__ = [
    "Model",
    "TestFunction",
    "Window",
    "ball_volume",
    "build_measure",
    "estimate_E",
    "estimate_V",
    "functional_from_dict",
    "perfect_sample",
    "potential_from_dict",
]
