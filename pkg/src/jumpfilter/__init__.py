"""Nonlinear filtering of partially observed jump diffusions.

Particle approximations of the unnormalized conditional law, Gaussian
mollification, exact L_p identities for particle measures and numerical
verifiers for the smoothed estimates.
"""

from .errors import ConfigError, ContractViolation, NumericalFailure
from .measure import ParticleMeasure, lp_norm_exact, mollify
from .models import get_model
from .operators import CoefficientSet, ShiftMap

__version__ = "0.1.0"

__all__ = [
    "CoefficientSet",
    "ConfigError",
    "ContractViolation",
    "NumericalFailure",
    "ParticleMeasure",
    "ShiftMap",
    "get_model",
    "lp_norm_exact",
    "mollify",
]
