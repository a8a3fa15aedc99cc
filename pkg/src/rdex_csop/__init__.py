"""Constrained differential evolution with epsilon-level ranking and a hybrid mutation scheme."""

from .benchmarks import get_problem, list_problems
from .constraints import ViolationConfig, mean_violation
from .engine import EngineConfig, RunResult, generation, initialize, run
from .harness import ExperimentPlan, run_experiment
from .problem import BudgetLedger, ProblemSpec, evaluate

__all__ = [
    "BudgetLedger",
    "EngineConfig",
    "ExperimentPlan",
    "ProblemSpec",
    "RunResult",
    "ViolationConfig",
    "evaluate",
    "generation",
    "get_problem",
    "initialize",
    "list_problems",
    "mean_violation",
    "run",
    "run_experiment",
]
