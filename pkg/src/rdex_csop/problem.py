"""Constrained problem abstraction and the evaluation-budget ledger.

A problem is ``min f(x)`` subject to ``g_i(x) <= 0``, ``h_j(x) = 0`` and
``lower <= x <= upper``.  Evaluators return raw constraint values; any
equality tolerance is applied later by the violation measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class ProblemError(Exception):
    """Base class for problem-model errors."""


class BudgetExhausted(ProblemError):
    pass


class NonFiniteOutput(ProblemError):
    pass


class DimensionMismatch(ProblemError):
    pass


@dataclass(frozen=True)
class RawEvaluation:
    f: float
    g: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class BatchEvaluation:
    """Row-aligned evaluations of a matrix of points."""

    f: np.ndarray  # (n,)
    g: np.ndarray  # (n, m_g)
    h: np.ndarray  # (n, m_h)

    def __len__(self) -> int:
        return len(self.f)

    def row(self, i: int) -> RawEvaluation:
        return RawEvaluation(float(self.f[i]), self.g[i].copy(), self.h[i].copy())


Evaluator = Callable[[np.ndarray], tuple]
BatchEvaluator = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable description of a constrained problem.

    ``evaluator`` maps a single vector to ``(f, g, h)``.  ``batch_evaluator``
    is an optional vectorised equivalent mapping an ``(n, D)`` matrix to
    ``(f[n], g[n, m_g], h[n, m_h])``; when absent the scalar evaluator is
    applied row by row.
    """

    name: str
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    n_ineq: int
    n_eq: int
    evaluator: Evaluator
    batch_evaluator: Optional[BatchEvaluator] = field(default=None, compare=False)
    reference_optimum: Optional[float] = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if self.dim < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")
        if lower.shape != (self.dim,) or upper.shape != (self.dim,):
            raise DimensionMismatch(
                f"bounds must have shape ({self.dim},), got {lower.shape} and {upper.shape}"
            )
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        if self.n_ineq < 0 or self.n_eq < 0:
            raise ValueError("constraint counts must be non-negative")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_constraints(self) -> int:
        return self.n_ineq + self.n_eq


@dataclass
class BudgetLedger:
    max_fe: int
    nfe: int = 0

    def __post_init__(self):
        if self.max_fe < 1:
            raise ValueError("max_fe must be positive")
        if not 0 <= self.nfe <= self.max_fe:
            raise ValueError("nfe must lie in [0, max_fe]")

    @property
    def remaining(self) -> int:
        return self.max_fe - self.nfe

    @property
    def exhausted(self) -> bool:
        return self.nfe >= self.max_fe

    @property
    def fraction(self) -> float:
        return self.nfe / self.max_fe

    def charge(self, n: int = 1) -> None:
        if n < 0:
            raise ValueError("cannot charge a negative number of evaluations")
        if self.nfe + n > self.max_fe:
            raise BudgetExhausted(
                f"{n} evaluation(s) requested with {self.remaining} of {self.max_fe} remaining"
            )
        self.nfe += n


def _check_dim(problem: ProblemSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise DimensionMismatch(f"{problem.name}: expected shape ({problem.dim},), got {x.shape}")
    return x


def in_bounds(problem: ProblemSpec, x) -> bool:
    x = _check_dim(problem, x)
    return bool(np.all(problem.lower <= x) and np.all(x <= problem.upper))


def _validate_output(problem: ProblemSpec, f, g, h, n: Optional[int] = None):
    if n is None:
        f = float(f)
        g = np.asarray(g, dtype=float).reshape(-1)
        h = np.asarray(h, dtype=float).reshape(-1)
        ok_shapes = g.shape == (problem.n_ineq,) and h.shape == (problem.n_eq,)
    else:
        f = np.asarray(f, dtype=float).reshape(-1)
        g = np.asarray(g, dtype=float).reshape(n, problem.n_ineq)
        h = np.asarray(h, dtype=float).reshape(n, problem.n_eq)
        ok_shapes = f.shape == (n,)
    if not ok_shapes:
        raise DimensionMismatch(f"{problem.name}: evaluator output does not match constraint counts")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
        raise NonFiniteOutput(f"{problem.name}: evaluator returned a non-finite value")
    return f, g, h


def evaluate(problem: ProblemSpec, x, ledger: BudgetLedger) -> RawEvaluation:
    """Evaluate one point, charging exactly one evaluation to ``ledger``."""
    x = _check_dim(problem, x)
    if ledger.exhausted:
        raise BudgetExhausted(f"budget of {ledger.max_fe} evaluations already spent")
    if not in_bounds(problem, x):
        raise ValueError(f"{problem.name}: point outside the search box")
    ledger.charge(1)
    f, g, h = _validate_output(problem, *problem.evaluator(x))
    return RawEvaluation(f, g, h)


def evaluate_batch(problem: ProblemSpec, X, ledger: BudgetLedger) -> BatchEvaluation:
    """Evaluate the rows of ``X`` in order; charges one evaluation per row.

    The whole batch is rejected before any evaluator call if it would
    overrun the budget.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != problem.dim:
        raise DimensionMismatch(f"{problem.name}: expected (n, {problem.dim}) matrix, got {X.shape}")
    n = X.shape[0]
    if n > ledger.remaining:
        raise BudgetExhausted(f"{n} evaluations requested with {ledger.remaining} remaining")
    if not (np.all(problem.lower <= X) and np.all(X <= problem.upper)):
        raise ValueError(f"{problem.name}: batch contains points outside the search box")
    ledger.charge(n)
    if problem.batch_evaluator is not None:
        f, g, h = problem.batch_evaluator(X)
    else:
        rows = [problem.evaluator(x) for x in X]
        f = [r[0] for r in rows]
        g = np.array([np.asarray(r[1], dtype=float).reshape(-1) for r in rows]).reshape(n, problem.n_ineq)
        h = np.array([np.asarray(r[2], dtype=float).reshape(-1) for r in rows]).reshape(n, problem.n_eq)
    f, g, h = _validate_output(problem, f, g, h, n=n)
    return BatchEvaluation(f, g, h)
