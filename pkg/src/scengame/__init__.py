"""Scenario-game approximation of stochastic games with a consensus-ADMM solver."""

from .game import GameSpec, check_monotonicity, gradient_consistency_check, pseudogradient
from .certificates import (
    BoxSampler,
    CertificateQuery,
    ScenarioSet,
    binomial_tail,
    delta_prop1,
    delta_prop2,
    empirical_objective,
    min_samples,
    sample_scenarios,
)

__all__ = [
    "GameSpec",
    "pseudogradient",
    "check_monotonicity",
    "gradient_consistency_check",
    "BoxSampler",
    "ScenarioSet",
    "CertificateQuery",
    "sample_scenarios",
    "binomial_tail",
    "delta_prop1",
    "delta_prop2",
    "min_samples",
    "empirical_objective",
]
