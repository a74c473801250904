"""Adaptively regularized stochastic trust-region optimization with adaptive sampling."""

from .estimation import Budget, BudgetExhausted
from .solver import (
    ALG1,
    ALG2CRN,
    ConfigError,
    IterationRecord,
    RegAstro,
    RunResult,
    SolverConfig,
    run,
)

__all__ = [
    "ALG1",
    "ALG2CRN",
    "Budget",
    "BudgetExhausted",
    "ConfigError",
    "IterationRecord",
    "RegAstro",
    "RunResult",
    "SolverConfig",
    "run",
]
__version__ = "0.1.0"
