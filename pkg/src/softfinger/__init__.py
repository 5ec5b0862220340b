"""Stochastic viscoelastic model of a tendon-driven soft finger.

Lumped-parameter finger kinematics and dynamics, the three-element joint
creep law, distribution estimation from repeated trials, joint-angle
densities by random variable transformation and time-resolved Sobol
indices.
"""

from .distributions import (
    PARAMETER_NAMES,
    JointDistributions,
    LogNormalShape,
    NormalShape,
    ParameterDistributions,
    canonical_distributions,
)
from .errors import ConfigError, DegenerateError, FitError, InputDataError, NumericalError, SoftFingerError
from .estimation import TrialSet, estimate_distributions
from .finger import DEFAULT_GEOMETRY, FingerGeometry
from .rvt import marginal_pdf, moment_band
from .sobol import creep_sensitivity_series, sobol_first_order
from .viscoelastic import JointViscoelasticity, Trajectory, simulate_full, simulate_quasi_static, step_response

__version__ = "0.1.0"

__all__ = [
    "PARAMETER_NAMES",
    "JointDistributions",
    "LogNormalShape",
    "NormalShape",
    "ParameterDistributions",
    "canonical_distributions",
    "ConfigError",
    "DegenerateError",
    "FitError",
    "InputDataError",
    "NumericalError",
    "SoftFingerError",
    "TrialSet",
    "estimate_distributions",
    "marginal_pdf",
    "moment_band",
    "creep_sensitivity_series",
    "sobol_first_order",
    "DEFAULT_GEOMETRY",
    "FingerGeometry",
    "JointViscoelasticity",
    "Trajectory",
    "simulate_full",
    "simulate_quasi_static",
    "step_response",
    "__version__",
]
