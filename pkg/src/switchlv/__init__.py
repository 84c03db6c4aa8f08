"""Predator-prey reaction-diffusion dynamics under two-state Markovian switching."""

__version__ = "0.1.0"

from .model import RegimeParams, SwitchingEnvironment, BoundConstants, validate, bound_constants
from .markov import MarkovPath, sample_path, stationary_distribution, occupation_fractions

__all__ = [
    "__version__",
    "RegimeParams",
    "SwitchingEnvironment",
    "BoundConstants",
    "validate",
    "bound_constants",
    "MarkovPath",
    "sample_path",
    "stationary_distribution",
    "occupation_fractions",
]
