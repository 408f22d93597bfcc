"""Output regulation of LTI plants from Poisson-sampled measurements.

Designs an internal-model regulator with a hybrid observer, certifies mean
exponential stability through LMIs and checks it by exact Monte Carlo
simulation of the sampled closed loop.
"""
__version__ = "0.1.0"

from .errors import (AssumptionError, ConfigError, DimensionError, InfeasibleError,
                     NumericalBreakdown, StochregError, SynthesisError)
from .kernels import BACKEND
from .model import ExoSystem, PlantModel, SamplingProcess, check_assumptions
from .io import load_example, parse_config

__all__ = ["__version__", "BACKEND", "PlantModel", "ExoSystem", "SamplingProcess",
           "check_assumptions", "load_example", "parse_config", "StochregError",
           "DimensionError", "AssumptionError", "SynthesisError", "InfeasibleError",
           "NumericalBreakdown", "ConfigError"]
