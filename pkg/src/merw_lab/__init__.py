"""merw-lab: simulation and numerics for multidimensional elephant random walks."""

from .params import (DerivedConstants, Regime, RegimeError, WalkParams,
                     derived_constants, parse_param)
from .walk import (StepDistribution, Trajectory, WalkState, advance,
                   conditional_moments, derw_step_distribution,
                   merw_step_distribution, simulate)

__all__ = [
    "DerivedConstants", "Regime", "RegimeError", "WalkParams",
    "derived_constants", "parse_param",
    "StepDistribution", "Trajectory", "WalkState", "advance",
    "conditional_moments", "derw_step_distribution",
    "merw_step_distribution", "simulate",
]

__version__ = "0.1.0"
