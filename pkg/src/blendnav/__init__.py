"""blendnav: shared-autonomy teleoperation over unreliable simulated networks.

Operator commands and onboard autonomy are fused by MAP inference over a
joint Gaussian-process model of the operator, the robot, and surrounding
crowd agents; control allocation between the two slides automatically with
their relative posterior uncertainty.
"""

from .errors import (BlendNavError, ConfigError, InferenceFailure,
                     InvalidInput, NumericalError, ProtocolError)
from .gp import (AGENT_DIM, OPERATOR_DIM, ROBOT_DIM, GoalMixture, GpPosterior,
                 KernelParams, TimedObservation, TimeGrid, fit_hyperparameters,
                 log_density, mixture_posterior, posterior,
                 predictive_std_at_now, sample)

__all__ = [
    "AGENT_DIM", "OPERATOR_DIM", "ROBOT_DIM",
    "BlendNavError", "ConfigError", "InferenceFailure", "InvalidInput",
    "NumericalError", "ProtocolError",
    "GoalMixture", "GpPosterior", "KernelParams", "TimedObservation",
    "TimeGrid", "fit_hyperparameters", "log_density", "mixture_posterior",
    "posterior", "predictive_std_at_now", "sample",
]
