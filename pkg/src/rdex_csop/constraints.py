"""Violation measure, epsilon-level schedule, ranking and selection rules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .problem import BudgetLedger, RawEvaluation


@dataclass(frozen=True)
class ViolationConfig:
    eps_eq: float = 1e-4
    eta: float = 0.8
    # fraction of the budget after which epsilon is forced to zero
    zero_after: float = 0.8

    def __post_init__(self):
        if not self.eps_eq > 0:
            raise ValueError("eps_eq must be positive")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")


class EpsilonPhase(enum.Enum):
    ACTIVE = "active"
    ZEROED = "zeroed"


@dataclass(frozen=True)
class EpsilonState:
    epsilon: float
    k: int
    phase: EpsilonPhase


@dataclass(frozen=True)
class ScoredIndividual:
    x: np.ndarray
    f: float
    phi: float
    phi_trunc: float
    score: float


def mean_violation(raw: RawEvaluation, cfg: ViolationConfig = ViolationConfig()) -> float:
    """Average of positive inequality parts and tolerance-exceeding equality parts."""
    g = np.asarray(raw.g, dtype=float).reshape(-1)
    h = np.asarray(raw.h, dtype=float).reshape(-1)
    m = g.size + h.size
    if m == 0:
        return 0.0
    total = np.maximum(0.0, g).sum() + np.maximum(0.0, np.abs(h) - cfg.eps_eq).sum()
    return float(total / m)


def mean_violation_batch(g: np.ndarray, h: np.ndarray, cfg: ViolationConfig = ViolationConfig()) -> np.ndarray:
    """Row-wise :func:`mean_violation` for ``g`` of shape (n, m_g) and ``h`` of shape (n, m_h)."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    n = g.shape[0]
    m = g.shape[1] + h.shape[1]
    if m == 0:
        return np.zeros(n)
    total = np.maximum(0.0, g).sum(axis=1) + np.maximum(0.0, np.abs(h) - cfg.eps_eq).sum(axis=1)
    return total / m


def epsilon_index(n: int, ledger: BudgetLedger, cfg: ViolationConfig = ViolationConfig()) -> int:
    frac = 1.0 - ledger.nfe / ledger.max_fe
    return max(1, math.floor(cfg.eta * n * frac * frac))


def epsilon_level(front_phis, ledger: BudgetLedger, cfg: ViolationConfig = ViolationConfig()) -> EpsilonState:
    """Epsilon for the current generation from the front's violation distribution.

    ``k`` is 1-indexed into the ascending (stable) sort of ``front_phis``.
    Once ``nfe`` passes ``zero_after * max_fe`` the level is pinned to 0.
    """
    phis = np.asarray(front_phis, dtype=float).reshape(-1)
    if phis.size == 0:
        raise ValueError("cannot compute epsilon level of an empty front")
    k = epsilon_index(phis.size, ledger, cfg)
    if ledger.nfe <= cfg.zero_after * ledger.max_fe:
        eps = float(np.sort(phis, kind="stable")[min(k, phis.size) - 1])
        return EpsilonState(eps, k, EpsilonPhase.ACTIVE)
    return EpsilonState(0.0, k, EpsilonPhase.ZEROED)


def truncate(phi, eps: float):
    """Zero out violations at or below ``eps``; works on scalars and arrays."""
    if np.ndim(phi) == 0:
        return 0.0 if phi <= eps else float(phi)
    phi = np.asarray(phi, dtype=float)
    return np.where(phi <= eps, 0.0, phi)


def rank_score(f: float, phi: float, eps: float, f_max: float) -> float:
    if phi <= eps:
        return float(f)
    return float(f_max + 1.0 + phi)


def rank_scores(f: np.ndarray, phi: np.ndarray, eps: float) -> np.ndarray:
    """Scores of a whole front; ``f_max`` is taken over ``f`` itself."""
    f = np.asarray(f, dtype=float)
    phi = np.asarray(phi, dtype=float)
    f_max = f.max()
    return np.where(phi <= eps, f, f_max + 1.0 + phi)


def score_individual(x, f: float, phi: float, eps: float, f_max: float) -> ScoredIndividual:
    return ScoredIndividual(
        x=np.asarray(x, dtype=float),
        f=float(f),
        phi=float(phi),
        phi_trunc=truncate(phi, eps),
        score=rank_score(f, phi, eps, f_max),
    )


def accepts(parent_phi_trunc, parent_f, trial_phi_trunc, trial_f):
    """One-to-one replacement rule on truncated violations; vectorised."""
    return (trial_phi_trunc < parent_phi_trunc) | (
        (trial_phi_trunc == parent_phi_trunc) & (trial_f <= parent_f)
    )


def select(parent: ScoredIndividual, trial: ScoredIndividual, eps: float | None = None) -> bool:
    """True iff ``trial`` replaces ``parent``.

    Both ``phi_trunc`` fields must come from the same epsilon.  Passing
    ``eps`` re-truncates the raw violations instead.
    """
    if eps is None:
        pt, tt = parent.phi_trunc, trial.phi_trunc
    else:
        pt, tt = truncate(parent.phi, eps), truncate(trial.phi, eps)
    return bool(accepts(pt, parent.f, tt, trial.f))


def feasibility_aware_quality(final_f: float, final_cv: float, b_p: float) -> float:
    """Objective for feasible runs, ``b_p + cv`` for infeasible ones."""
    if final_cv <= 0:
        return float(final_f)
    return float(b_p + final_cv)


def quality_offset(final_fs) -> float:
    """Largest finite final objective plus one (``B_p``)."""
    fs = np.asarray(final_fs, dtype=float)
    fs = fs[np.isfinite(fs)]
    if fs.size == 0:
        return 1.0
    return float(fs.max() + 1.0)


def lex_better(phi_a: float, f_a: float, phi_b: float, f_b: float) -> bool:
    """Strict feasibility-first (violation, objective) comparison."""
    return phi_a < phi_b or (phi_a == phi_b and f_a < f_b)
