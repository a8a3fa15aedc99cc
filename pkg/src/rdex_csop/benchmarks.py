"""Registry of analytic constrained test problems with known optima.

Equality constraints are returned raw.  Because the violation measure
tolerates ``|h| <= eps_eq``, problems with equalities have a tolerance-relaxed
optimum slightly below the exact one; entries record both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .constraints import ViolationConfig, mean_violation
from .problem import ProblemSpec, RawEvaluation

DEFAULT_EPS_EQ = ViolationConfig().eps_eq


class UnknownProblem(KeyError):
    pass


class UnsupportedDimension(ValueError):
    pass


@dataclass(frozen=True)
class ProblemEntry:
    spec: ProblemSpec
    known_optimum_f: Optional[float] = None
    known_optimizer: Optional[np.ndarray] = None
    # optimum over the eps_eq-tolerant feasible set (default tolerance)
    relaxed_optimum_f: Optional[float] = None
    feasible_fraction_hint: Optional[float] = None


def _empty(n):
    return np.zeros((n, 0))


# --- sphere-linear-ineq: min sum x^2  s.t.  sum x >= D

def _sli_eval(x):
    return float(x @ x), np.array([x.size - x.sum()]), np.zeros(0)


def _sli_batch(X):
    return np.einsum("ij,ij->i", X, X), (X.shape[1] - X.sum(axis=1))[:, None], _empty(len(X))


def _sphere_linear_ineq(D: int) -> ProblemEntry:
    spec = ProblemSpec(
        name="sphere-linear-ineq",
        dim=D,
        lower=np.full(D, -5.0),
        upper=np.full(D, 5.0),
        n_ineq=1,
        n_eq=0,
        evaluator=_sli_eval,
        batch_evaluator=_sli_batch,
        reference_optimum=float(D),
    )
    return ProblemEntry(spec, float(D), np.ones(D), float(D), feasible_fraction_hint=0.5 if D > 1 else 0.4)


# --- sphere-eq: min sum x^2  s.t.  sum x = 1

def _seq_eval(x):
    return float(x @ x), np.zeros(0), np.array([x.sum() - 1.0])


def _seq_batch(X):
    return np.einsum("ij,ij->i", X, X), _empty(len(X)), (X.sum(axis=1) - 1.0)[:, None]


def _sphere_eq(D: int) -> ProblemEntry:
    spec = ProblemSpec(
        name="sphere-eq",
        dim=D,
        lower=np.full(D, -5.0),
        upper=np.full(D, 5.0),
        n_ineq=0,
        n_eq=1,
        evaluator=_seq_eval,
        batch_evaluator=_seq_batch,
        reference_optimum=1.0 / D,
    )
    # relaxed: the sum may sit at 1 - eps_eq
    relaxed = (1.0 - DEFAULT_EPS_EQ) ** 2 / D
    return ProblemEntry(spec, 1.0 / D, np.full(D, 1.0 / D), relaxed, feasible_fraction_hint=0.0)


# --- rosenbrock-cubic-line: 2-D Rosenbrock cut by a cubic and a line

def _rcl_eval(x):
    a, b = x
    f = (1.0 - a) ** 2 + 100.0 * (b - a * a) ** 2
    return float(f), np.array([(a - 1.0) ** 3 - b + 1.0, a + b - 2.0]), np.zeros(0)


def _rcl_batch(X):
    a, b = X[:, 0], X[:, 1]
    f = (1.0 - a) ** 2 + 100.0 * (b - a * a) ** 2
    return f, np.column_stack([(a - 1.0) ** 3 - b + 1.0, a + b - 2.0]), _empty(len(X))


def _rosenbrock_cubic_line(D: int) -> ProblemEntry:
    if D != 2:
        raise UnsupportedDimension("rosenbrock-cubic-line is defined for D=2 only")
    spec = ProblemSpec(
        name="rosenbrock-cubic-line",
        dim=2,
        lower=np.array([-1.5, -0.5]),
        upper=np.array([1.5, 2.5]),
        n_ineq=2,
        n_eq=0,
        evaluator=_rcl_eval,
        batch_evaluator=_rcl_batch,
        reference_optimum=0.0,
    )
    return ProblemEntry(spec, 0.0, np.array([1.0, 1.0]), 0.0)


# --- rastrigin-box-linear: Rastrigin with the half-space x_1 >= 1/2

def _rastrigin_1d(t):
    return t * t - 10.0 * np.cos(2.0 * np.pi * t) + 10.0


def _rastrigin_shifted_min() -> Tuple[float, float]:
    """Local minimiser of the 1-D Rastrigin term near 1 (the best point with t >= 1/2)."""
    t = 1.0
    for _ in range(50):
        d1 = 2.0 * t + 20.0 * np.pi * np.sin(2.0 * np.pi * t)
        d2 = 2.0 + 40.0 * np.pi**2 * np.cos(2.0 * np.pi * t)
        step = d1 / d2
        t -= step
        if abs(step) < 1e-16:
            break
    return float(t), float(_rastrigin_1d(t))


_RBL_T, _RBL_F = _rastrigin_shifted_min()


def _rbl_eval(x):
    f = 10.0 * x.size + float(np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))
    return f, np.array([0.5 - x[0]]), np.zeros(0)


def _rbl_batch(X):
    f = 10.0 * X.shape[1] + np.sum(X * X - 10.0 * np.cos(2.0 * np.pi * X), axis=1)
    return f, (0.5 - X[:, 0])[:, None], _empty(len(X))


def _rastrigin_box_linear(D: int) -> ProblemEntry:
    spec = ProblemSpec(
        name="rastrigin-box-linear",
        dim=D,
        lower=np.full(D, -5.12),
        upper=np.full(D, 5.12),
        n_ineq=1,
        n_eq=0,
        evaluator=_rbl_eval,
        batch_evaluator=_rbl_batch,
        reference_optimum=_RBL_F,
    )
    opt = np.zeros(D)
    opt[0] = _RBL_T
    return ProblemEntry(spec, _RBL_F, opt, _RBL_F, feasible_fraction_hint=0.45)


# --- mixed-eq-ineq: sphere with x_1 + x_2 = 1, x_3 >= 1/2, x_1 <= 0.3

def _mei_eval(x):
    return (
        float(x @ x),
        np.array([0.5 - x[2], x[0] - 0.3]),
        np.array([x[0] + x[1] - 1.0]),
    )


def _mei_batch(X):
    return (
        np.einsum("ij,ij->i", X, X),
        np.column_stack([0.5 - X[:, 2], X[:, 0] - 0.3]),
        (X[:, 0] + X[:, 1] - 1.0)[:, None],
    )


def _mixed_eq_ineq(D: int) -> ProblemEntry:
    if D < 3:
        raise UnsupportedDimension("mixed-eq-ineq needs D >= 3")
    spec = ProblemSpec(
        name="mixed-eq-ineq",
        dim=D,
        lower=np.full(D, -5.0),
        upper=np.full(D, 5.0),
        n_ineq=2,
        n_eq=1,
        evaluator=_mei_eval,
        batch_evaluator=_mei_batch,
        reference_optimum=0.83,
    )
    opt = np.zeros(D)
    opt[:3] = (0.3, 0.7, 0.5)
    relaxed = 0.09 + (0.7 - DEFAULT_EPS_EQ) ** 2 + 0.25
    return ProblemEntry(spec, float(opt @ opt), opt, relaxed, feasible_fraction_hint=0.0)


_REGISTRY: Dict[str, Tuple[Callable[[int], ProblemEntry], str]] = {
    "sphere-linear-ineq": (_sphere_linear_ineq, "D>=1"),
    "sphere-eq": (_sphere_eq, "D>=1"),
    "rosenbrock-cubic-line": (_rosenbrock_cubic_line, "D=2"),
    "rastrigin-box-linear": (_rastrigin_box_linear, "D>=1"),
    "mixed-eq-ineq": (_mixed_eq_ineq, "D>=3"),
}


def list_problems() -> List[str]:
    return list(_REGISTRY)


def dimension_support(name: str) -> str:
    if name not in _REGISTRY:
        raise UnknownProblem(name)
    return _REGISTRY[name][1]


def default_dim(name: str) -> int:
    return {"rosenbrock-cubic-line": 2, "mixed-eq-ineq": 4}.get(name, 4)


def get_problem(name: str, D: int) -> ProblemEntry:
    try:
        factory = _REGISTRY[name][0]
    except KeyError:
        raise UnknownProblem(f"unknown problem {name!r}; known: {', '.join(_REGISTRY)}") from None
    if D < 1:
        raise UnsupportedDimension("dimension must be positive")
    return factory(D)


def verify_optimum(entry: ProblemEntry, cfg: ViolationConfig = ViolationConfig(), tol: float = 1e-9) -> bool:
    """Check that the stored optimizer is feasible and reproduces the stored objective."""
    if entry.known_optimizer is None or entry.known_optimum_f is None:
        raise ValueError(f"{entry.spec.name}: no known optimizer to verify")
    f, g, h = entry.spec.evaluator(np.asarray(entry.known_optimizer, dtype=float))
    phi = mean_violation(RawEvaluation(float(f), np.asarray(g), np.asarray(h)), cfg)
    return phi == 0.0 and math.isclose(f, entry.known_optimum_f, rel_tol=0.0, abs_tol=tol)
