"""Pulsating fronts of a bistable competition-diffusion system in periodic media.

Two independent routes to the sign of the large-competition front speed:

* dynamic: time-integrate the two-species system and measure the front
  (:mod:`pulsefront.simulate`, :mod:`pulsefront.analysis`);
* analytic: half-line boundary-value problems, the threshold profile
  ``A_d`` and the sign integral (:mod:`pulsefront.theta`).
"""

from .errors import (
    ConsistencyError,
    GluingError,
    NumericalFailure,
    PulsefrontError,
)
from .reaction import LogisticReaction, PeriodicReaction, reflect, rescale, scale
from .kpp import minimal_speed, principal_eigenvalue, speed_bracket
from .theta import a_profile, predict_sign, r0_interval, r_bounds, sign_integral, theta

__all__ = [
    "ConsistencyError",
    "GluingError",
    "LogisticReaction",
    "NumericalFailure",
    "PeriodicReaction",
    "PulsefrontError",
    "a_profile",
    "minimal_speed",
    "predict_sign",
    "principal_eigenvalue",
    "r0_interval",
    "r_bounds",
    "reflect",
    "rescale",
    "scale",
    "sign_integral",
    "speed_bracket",
    "theta",
]

__version__ = "0.1.0"
