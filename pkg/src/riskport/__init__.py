"""Optimal investment with deterministic coefficients: duality evaluators,
risk-tolerance verification, clipped approximations and comparative statics."""
from .constrained import ClippedDualField
from .dual import DualField
from .errors import ConfigError, DomainError, ModelError, NumericError, RiskportError
from .market import CoefficientCurve, MarketModel, deflator_law, theta
from .policy import complete_market, feedback_policy, log_optimal_direction
from .utility import (UtilitySpec, make_crra, make_crra_mixture, make_log, more_risk_averse,
                      perturb_epsilon, scale_utility, validate)

__all__ = [
    "ClippedDualField", "CoefficientCurve", "ConfigError", "DomainError", "DualField",
    "MarketModel", "ModelError", "NumericError", "RiskportError", "UtilitySpec",
    "complete_market", "deflator_law", "feedback_policy", "log_optimal_direction",
    "make_crra", "make_crra_mixture", "make_log", "more_risk_averse", "perturb_epsilon",
    "scale_utility", "theta", "validate",
]
