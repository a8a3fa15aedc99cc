"""The RDEx-CSOP generation loop.

One generation builds every trial from the front as it stood when the
generation began, evaluates the trials in index order (stopping when the
budget runs out), applies one-to-one selection, updates the adaptive
parameters and finally shrinks the front.

Random draws are consumed in a fixed order per generation, which the
scripted-generator tests rely on.  Integer picks are ``floor(u * n)`` of a
uniform ``u``:

 1. ``random(N)``              branch choice (EB when below the hybrid rate)
 2. ``random(N)``              memory slots over ``H + 1``
 3. ``standard_normal(n_std)`` standard-branch F, redrawn outside (0, 1]
 4. ``standard_cauchy(n_eb)``  EB-branch F, redrawn when non-positive
 5. ``standard_normal(N)``     CR for every trial
 6. ``random(n_std)``          pbest pick among the p best
 7. ``random(n_std)``          rank-biased r1, redrawn where r1 == i
 8. ``random(n_std)``          pool index r2, redrawn on identity clashes
 9. ``random((n_eb, 3))``      EB donors without replacement
10. ``random(N)``              perturbation switch per trial
11. ``standard_cauchy((n_pert, D))`` perturbation noise
12. ``random((N, D))``         crossover mask
13. ``random(N)``              forced donor component
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import adaptation as ad
from .constraints import (
    EpsilonState,
    ViolationConfig,
    accepts,
    epsilon_level,
    mean_violation_batch,
    rank_scores,
    truncate,
)
from .problem import BudgetExhausted, BudgetLedger, ProblemSpec, evaluate_batch


class FrontTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    n0: int = 600
    n_min: int = 4
    H: int = 5
    rho_init: float = 0.7
    perturb_prob: float = 0.2
    perturb_scale: float = 0.1
    pbest_frac: float = 0.3
    violation: ViolationConfig = field(default_factory=ViolationConfig)
    rank_bias_lambda: float = 3.0
    seed: int = 0
    init_f: float = 0.3
    init_cr: float = 1.0
    # pins the EB branch probability for every generation when set
    force_rho: Optional[float] = None

    def __post_init__(self):
        if self.n_min < 4:
            raise ValueError("n_min must be at least 4 for the mutation operators")
        if self.n_min > self.n0:
            raise ValueError("n_min must not exceed n0")
        if not 0 < self.pbest_frac <= 1:
            raise ValueError("pbest_frac must lie in (0, 1]")
        if not 0 <= self.perturb_prob <= 1:
            raise ValueError("perturb_prob must lie in [0, 1]")
        if self.force_rho is not None and not 0 <= self.force_rho <= 1:
            raise ValueError("force_rho must lie in [0, 1]")


@dataclass
class EngineState:
    X: np.ndarray
    f: np.ndarray
    phi: np.ndarray
    uid: np.ndarray
    pool_X: np.ndarray
    pool_uid: np.ndarray
    pool_write: int
    bank: ad.MemoryBank
    adapt: ad.AdaptState
    ledger: BudgetLedger
    rng: object
    config: EngineConfig
    epsilon: Optional[EpsilonState] = None
    generation: int = 0
    next_uid: int = 0
    best_x: Optional[np.ndarray] = None
    best_f: float = math.inf
    best_phi: float = math.inf
    checkpoints: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    next_checkpoint: int = 0
    trace: list = field(default_factory=list)
    trials_by_branch: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))
    terminal: bool = False

    @property
    def size(self) -> int:
        return self.X.shape[0]


@dataclass
class GenerationRecord:
    """Everything one generation produced; used by tests and instrumentation."""

    generation: int
    epsilon: EpsilonState
    scores: np.ndarray
    branch: np.ndarray
    slots: np.ndarray
    F: np.ndarray
    CR: np.ndarray
    donors: np.ndarray
    trials: np.ndarray
    repaired: np.ndarray
    ratio: np.ndarray
    n_evaluated: int
    trial_f: np.ndarray
    trial_phi: np.ndarray
    parent_phi_trunc: np.ndarray
    parent_f: np.ndarray
    trial_phi_trunc: np.ndarray
    accepted: np.ndarray
    delta: np.ndarray
    successes: List[ad.SuccessRecord]
    size_before: int
    size_after: int
    nfe: int


@dataclass
class RunResult:
    points: list
    best_x: np.ndarray
    best_f: float
    best_cv: float
    nfe: int
    generations: int


def lpsr_size(ledger: BudgetLedger, n0: int, n_min: int) -> int:
    n = math.floor(n0 + (n_min - n0) * ledger.nfe / ledger.max_fe)
    return min(n0, max(n_min, n))


def pbest_count(n: int, frac: float = 0.3) -> int:
    return max(2, math.floor(frac * n))


def rank_weights(n: int, lam: float) -> np.ndarray:
    return np.exp(-lam * np.arange(n) / n)


def repair(trial, parent, lower, upper) -> np.ndarray:
    """Move out-of-box components halfway from the parent to the violated bound."""
    trial = np.asarray(trial, dtype=float)
    parent = np.asarray(parent, dtype=float)
    out = np.where(trial < lower, (parent + lower) / 2.0, trial)
    return np.where(trial > upper, (parent + upper) / 2.0, out)


def crossover(parent, donor, cr, perturb_prob: float, perturb_scale: float, rng):
    """Binomial crossover against a possibly Cauchy-perturbed base.

    Accepts single vectors or row-stacked matrices (with ``cr`` per row).
    Returns ``(trial, ratio)`` where ratio is the share of donor components.
    """
    parent = np.asarray(parent, dtype=float)
    donor = np.asarray(donor, dtype=float)
    single = parent.ndim == 1
    P = np.atleast_2d(parent)
    V = np.atleast_2d(donor)
    n, d = P.shape
    cr = np.asarray(cr, dtype=float)
    if cr.ndim == 0:
        cr = np.full(n, float(cr))
    base = P.copy()
    perturb = np.asarray(rng.random(n)) < perturb_prob
    n_pert = int(perturb.sum())
    if n_pert:
        noise = np.asarray(rng.standard_cauchy((n_pert, d)), dtype=float).reshape(n_pert, d)
        base[perturb] = P[perturb] + perturb_scale * noise
    mask = np.asarray(rng.random((n, d))).reshape(n, d) < cr[:, None]
    jrand = ad.uniform_index(rng, d, n)
    mask[np.arange(n), jrand] = True
    U = np.where(mask, V, base)
    ratio = mask.sum(axis=1) / d
    if single:
        return U[0], float(ratio[0])
    return U, ratio


def _three_distinct_excluding(rng, n_pop: int, exclude: np.ndarray) -> np.ndarray:
    """Three distinct uniform indices per row from ``range(n_pop)``, none equal to ``exclude``.

    One ``random((rows, 3))`` call picks column ``c`` from ``range(n_pop - 1 - c)``;
    each pick is then shifted past the indices already taken in its row
    (ascending), which is sampling without replacement.
    """
    raw = ad.uniform_index(rng, n_pop - 1 - np.arange(3), (exclude.size, 3))
    i = exclude
    a = raw[:, 0] + (raw[:, 0] >= i)
    lo, hi = np.minimum(i, a), np.maximum(i, a)
    b = raw[:, 1] + (raw[:, 1] >= lo)
    b += b >= hi
    s0, s2 = np.minimum(lo, b), np.maximum(hi, b)
    s1 = i + a + b - s0 - s2
    c = raw[:, 2] + (raw[:, 2] >= s0)
    c += c >= s1
    c += c >= s2
    return np.stack([a, b, c], axis=1)


def _mutate_standard_rows(state: EngineState, idx: np.ndarray, F: np.ndarray, order: np.ndarray):
    rng = state.rng
    n = state.size
    cfg = state.config
    p = pbest_count(n, cfg.pbest_frac)
    pbest = order[ad.uniform_index(rng, p, idx.size)]

    cdf = np.cumsum(rank_weights(n, cfg.rank_bias_lambda))

    def draw_r1(k):
        u = np.asarray(rng.random(k), dtype=float).reshape(k)
        pos = np.searchsorted(cdf, u * cdf[-1], side="right")
        return order[np.minimum(pos, n - 1)]

    r1 = draw_r1(idx.size)
    bad = r1 == idx
    while bad.any():
        r1[bad] = draw_r1(int(bad.sum()))
        bad = r1 == idx

    cap = state.pool_X.shape[0]

    def draw_r2(k):
        return ad.uniform_index(rng, cap, k)

    r2 = draw_r2(idx.size)
    clash = lambda: (state.pool_uid[r2] == state.uid[idx]) | (state.pool_uid[r2] == state.uid[r1])
    bad = clash()
    while bad.any():
        r2[bad] = draw_r2(int(bad.sum()))
        bad = clash()

    Xi = state.X[idx]
    Fc = F[:, None]
    V = Xi + Fc * (state.X[pbest] - Xi) + Fc * (state.X[r1] - state.pool_X[r2])
    return V, np.stack([pbest, r1, r2], axis=1)


def _mutate_eb_rows(state: EngineState, idx: np.ndarray, F: np.ndarray, scores: np.ndarray):
    trio = _three_distinct_excluding(state.rng, state.size, idx)
    rows = np.arange(idx.size)[:, None]
    ranked = trio[rows, np.argsort(scores[trio], axis=1, kind="stable")]
    X = state.X
    Xi = X[idx]
    Fc = F[:, None]
    V = Xi + Fc * (X[ranked[:, 0]] - Xi) + Fc * (X[ranked[:, 1]] - X[ranked[:, 2]])
    return V, ranked


def mutate_standard(state: EngineState, i: int, F: float, scores: Optional[np.ndarray] = None) -> np.ndarray:
    """Current-to-pbest donor for front member ``i`` (pool supplies the second difference vector)."""
    if state.size < 4:
        raise FrontTooSmall(f"front of size {state.size} is too small for mutation")
    scores = _current_scores(state) if scores is None else scores
    order = np.argsort(scores, kind="stable")
    V, _ = _mutate_standard_rows(state, np.array([i]), np.array([F], dtype=float), order)
    return V[0]


def mutate_eb(state: EngineState, i: int, F: float, scores: Optional[np.ndarray] = None) -> np.ndarray:
    """Donor built from three rank-ordered front members other than ``i``."""
    if state.size < 4:
        raise FrontTooSmall(f"front of size {state.size} is too small for mutation")
    scores = _current_scores(state) if scores is None else scores
    V, _ = _mutate_eb_rows(state, np.array([i]), np.array([F], dtype=float), scores)
    return V[0]


def _current_scores(state: EngineState) -> np.ndarray:
    eps = state.epsilon.epsilon if state.epsilon is not None else 0.0
    return rank_scores(state.f, state.phi, eps)


def _observe(state: EngineState, X: np.ndarray, f: np.ndarray, phi: np.ndarray) -> None:
    """Fold freshly evaluated rows into the incumbent and fire due checkpoints.

    Rows are taken in evaluation order; the ledger has already been charged.
    """
    start = state.ledger.nfe - len(f)
    cps = state.checkpoints
    lo = 0
    while True:
        hi = len(f)
        if state.next_checkpoint < cps.size:
            hi = min(hi, int(cps[state.next_checkpoint]) - start)
        if hi > lo:
            j = lo + int(np.lexsort((f[lo:hi], phi[lo:hi]))[0])
            if phi[j] < state.best_phi or (phi[j] == state.best_phi and f[j] < state.best_f):
                state.best_phi = float(phi[j])
                state.best_f = float(f[j])
                state.best_x = X[j].copy()
            lo = hi
        while state.next_checkpoint < cps.size and int(cps[state.next_checkpoint]) <= start + lo:
            c = state.next_checkpoint
            state.trace.append((c + 1, int(cps[c]), state.best_f, state.best_phi))
            state.next_checkpoint += 1
        if lo >= len(f):
            break


def initialize(config: EngineConfig, problem: ProblemSpec, max_fe: int, checkpoints=None, rng=None) -> EngineState:
    """Sample and evaluate ``n0`` uniform points; they seed both the front and the pool."""
    if config.n0 > max_fe:
        raise BudgetExhausted(f"initial population of {config.n0} exceeds the budget of {max_fe}")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    ledger = BudgetLedger(max_fe)
    lower, upper = problem.lower, problem.upper
    u = np.asarray(rng.random((config.n0, problem.dim)), dtype=float).reshape(config.n0, problem.dim)
    X = lower + u * (upper - lower)
    ev = evaluate_batch(problem, X, ledger)
    phi = mean_violation_batch(ev.g, ev.h, config.violation)
    uid = np.arange(config.n0)
    state = EngineState(
        X=X,
        f=ev.f.copy(),
        phi=phi,
        uid=uid,
        pool_X=X.copy(),
        pool_uid=uid.copy(),
        pool_write=0,
        bank=ad.MemoryBank(config.H, config.init_f, config.init_cr),
        adapt=ad.AdaptState(ad.INITIAL_SR, config.rho_init),
        ledger=ledger,
        rng=rng,
        config=config,
        next_uid=config.n0,
        checkpoints=np.zeros(0, dtype=np.int64) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64),
    )
    _observe(state, X, ev.f, phi)
    return state


def generation(state: EngineState, problem: ProblemSpec) -> GenerationRecord:
    """Advance ``state`` by one generation in place and describe what happened."""
    if state.ledger.exhausted:
        raise BudgetExhausted("no evaluations left for another generation")
    n = state.size
    if n < 4:
        raise FrontTooSmall(f"front of size {n} is too small for mutation")
    cfg = state.config
    rng = state.rng
    d = problem.dim
    ledger = state.ledger

    eps_state = epsilon_level(state.phi, ledger, cfg.violation)
    state.epsilon = eps_state
    eps = eps_state.epsilon
    scores = rank_scores(state.f, state.phi, eps)
    order = np.argsort(scores, kind="stable")

    rho = state.adapt.hybrid_rate if cfg.force_rho is None else cfg.force_rho
    is_eb = np.asarray(rng.random(n), dtype=float).reshape(n) < rho
    branch = np.where(is_eb, ad.Branch.EB, ad.Branch.STANDARD).astype(np.int8)
    slots = ad.pick_memory_slot(state.bank, rng, n).reshape(n)
    std_idx = np.flatnonzero(~is_eb)
    eb_idx = np.flatnonzero(is_eb)

    F = np.empty(n)
    if std_idx.size:
        F[std_idx] = ad.sample_F_standard(state.adapt.success_rate, rng, size=std_idx.size)
    if eb_idx.size:
        F[eb_idx] = ad.sample_F_eb(state.bank, slots[eb_idx], rng, size=eb_idx.size)
    CR = ad.sample_CR(state.bank, slots, branch, ledger, rng, size=n)

    V = np.empty((n, d))
    donors = np.full((n, 3), -1, dtype=np.intp)
    if std_idx.size:
        V[std_idx], donors[std_idx] = _mutate_standard_rows(state, std_idx, F[std_idx], order)
    if eb_idx.size:
        V[eb_idx], donors[eb_idx] = _mutate_eb_rows(state, eb_idx, F[eb_idx], scores)
    state.trials_by_branch += np.bincount(branch, minlength=2)

    U, ratio = crossover(state.X, V, CR, cfg.perturb_prob, cfg.perturb_scale, rng)
    R = repair(U, state.X, problem.lower, problem.upper)

    m = min(n, ledger.remaining)
    ev = evaluate_batch(problem, R[:m], ledger)
    trial_phi = mean_violation_batch(ev.g, ev.h, cfg.violation)
    _observe(state, R[:m], ev.f, trial_phi)

    parent_f = state.f[:m].copy()
    parent_pt = truncate(state.phi[:m], eps)
    trial_pt = truncate(trial_phi, eps)
    acc = accepts(parent_pt, parent_f, trial_pt, ev.f)
    delta = np.where(parent_pt != trial_pt, parent_pt - trial_pt, parent_f - ev.f)
    delta = np.where(acc, delta, 0.0)

    hit = np.flatnonzero(acc)
    if hit.size:
        new_uid = state.next_uid + np.arange(hit.size)
        state.next_uid += hit.size
        state.X[hit] = R[hit]
        state.f[hit] = ev.f[hit]
        state.phi[hit] = trial_phi[hit]
        state.uid[hit] = new_uid
        cap = state.pool_X.shape[0]
        slots_pool = (state.pool_write + np.arange(hit.size)) % cap
        state.pool_X[slots_pool] = R[hit]
        state.pool_uid[slots_pool] = new_uid
        state.pool_write = int((state.pool_write + hit.size) % cap)

    successes = [
        ad.SuccessRecord(float(F[i]), float(ratio[i]), float(delta[i]), ad.Branch(int(branch[i])))
        for i in hit
        if delta[i] > 0
    ]
    state.bank = ad.update_memories(state.bank, successes)
    d_eb = sum(s.delta for s in successes if s.branch == ad.Branch.EB)
    d_std = sum(s.delta for s in successes if s.branch == ad.Branch.STANDARD)
    state.adapt.hybrid_rate = ad.update_hybrid_rate(d_eb, d_std)
    if m > 0:
        state.adapt.success_rate = ad.compute_success_rate(int(hit.size), m)

    target = lpsr_size(ledger, cfg.n0, cfg.n_min)
    if target < n:
        post_scores = rank_scores(state.f, state.phi, eps)
        keep = np.sort(np.argsort(post_scores, kind="stable")[:target])
        state.X = state.X[keep]
        state.f = state.f[keep]
        state.phi = state.phi[keep]
        state.uid = state.uid[keep]

    state.generation += 1
    state.terminal = ledger.exhausted
    return GenerationRecord(
        generation=state.generation - 1,
        epsilon=eps_state,
        scores=scores,
        branch=branch,
        slots=slots,
        F=F,
        CR=CR,
        donors=donors,
        trials=U,
        repaired=R,
        ratio=ratio,
        n_evaluated=m,
        trial_f=ev.f,
        trial_phi=trial_phi,
        parent_phi_trunc=parent_pt,
        parent_f=parent_f,
        trial_phi_trunc=trial_pt,
        accepted=acc,
        delta=delta,
        successes=successes,
        size_before=n,
        size_after=state.size,
        nfe=ledger.nfe,
    )


def run(
    config: EngineConfig,
    problem: ProblemSpec,
    max_fe: int,
    checkpoints=None,
    callback: Optional[Callable[[EngineState, GenerationRecord], None]] = None,
) -> RunResult:
    """Run generations until the budget is spent.

    ``checkpoints`` is an increasing sequence of nfe thresholds; at each one
    the lexicographic (violation, objective) incumbent is recorded.
    """
    state = initialize(config, problem, max_fe, checkpoints)
    while not state.ledger.exhausted:
        rec = generation(state, problem)
        if callback is not None:
            callback(state, rec)
    return RunResult(
        points=list(state.trace),
        best_x=state.best_x,
        best_f=state.best_f,
        best_cv=state.best_phi,
        nfe=state.ledger.nfe,
        generations=state.generation,
    )
