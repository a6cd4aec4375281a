"""Benchmark objectives: closed-form synthetics and the toy lap-time simulator."""

from .metrics import cumulative_regret, make_tau, measurement_stats
from .synthetic import (
    Bump,
    NoiseModel,
    SyntheticEvaluator,
    SyntheticObjective,
    empirical_lipschitz,
    eval_synthetic,
    lipschitz_bound,
)
from .synthetic import available as available_synthetics
from .synthetic import load as load_synthetic

__all__ = [
    "Bump", "NoiseModel", "SyntheticEvaluator", "SyntheticObjective", "available_synthetics",
    "cumulative_regret", "empirical_lipschitz", "eval_synthetic", "lipschitz_bound",
    "load_synthetic", "make_tau", "measurement_stats",
]
