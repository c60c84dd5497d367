"""Robust multiclass queueing control: generalized c-mu rule against an adversary."""

from .adversary import AdversaryStrategy, eval_strategy, rn_exponent_brownian, rn_exponent_poisson
from .config import ConfigBundle, StudySpec, parse_config
from .curve import CurveTable, check_optimality_oracle, index_inverse, solve_f
from .estimates import CostEstimate
from .limit_game import estimate_game_cost, estimate_value, simulate_f_reflected
from .model import (
    CostModel,
    DivergenceModel,
    ExponentialDiscount,
    FiniteHorizon,
    SystemConfig,
    derived_rates,
    validate_config,
)
from .prelimit import Policy, collapse_metric, estimate_qcp_cost, select_class_cmu, simulate_system
from .skorokhod import SampledPath, reflect, regulator

__version__ = "0.1.0"

__all__ = [
    "AdversaryStrategy", "ConfigBundle", "CostEstimate", "CostModel", "CurveTable", "DivergenceModel",
    "ExponentialDiscount", "FiniteHorizon", "Policy", "SampledPath", "StudySpec", "SystemConfig",
    "check_optimality_oracle", "collapse_metric", "derived_rates", "estimate_game_cost", "estimate_qcp_cost",
    "estimate_value", "eval_strategy", "index_inverse", "parse_config", "reflect", "regulator",
    "rn_exponent_brownian", "rn_exponent_poisson", "select_class_cmu", "simulate_f_reflected",
    "simulate_system", "solve_f", "validate_config",
]
