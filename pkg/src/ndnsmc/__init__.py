"""Tick-based stochastic simulation and statistical model checking of an
NDN-style forwarder data plane."""

from .calibration import CalibrationProfile, dirac_profile, synthetic_profile
from .distributions import Distribution, FitReport, boxcox, fit, inverse_boxcox, ppcc
from .forwarder import (Counters, FactorConfig, build_model, run_cell,
                        satisfaction_rate)
from .kernel import Model, Runtime, Trace, run_trace, step
from .smc import (AllSatisfied, SatisfactionRatio, SmcEstimate, SprtConfig,
                  estimate, required_samples, sprt)

__version__ = "0.1.0"

__all__ = [
    "AllSatisfied",
    "CalibrationProfile",
    "Counters",
    "Distribution",
    "FactorConfig",
    "FitReport",
    "Model",
    "Runtime",
    "SatisfactionRatio",
    "SmcEstimate",
    "SprtConfig",
    "Trace",
    "boxcox",
    "build_model",
    "dirac_profile",
    "estimate",
    "fit",
    "inverse_boxcox",
    "ppcc",
    "required_samples",
    "run_cell",
    "run_trace",
    "satisfaction_rate",
    "sprt",
    "step",
    "synthetic_profile",
]
