"""Success-history memories, F/CR sampling and the hybrid branch rate.

All samplers take an explicit generator exposing the numpy ``Generator``
methods ``random``, ``standard_normal`` and ``standard_cauchy``; nothing
else is drawn, so a scripted stand-in only has to supply those three.
Memory slots are 0-indexed here: slots ``0..H-1`` are learned, slot ``H``
is the fixed fallback.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .problem import BudgetLedger

F_STD_SIGMA = 0.05
F_EB_SCALE = 0.1
CR_SIGMA = 0.1
FALLBACK_F = 0.4
FALLBACK_CR = 0.9
DEFAULT_RHO = 0.7
INITIAL_SR = 0.5


class Branch(enum.IntEnum):
    STANDARD = 0
    EB = 1


@dataclass
class MemoryBank:
    H: int = 5
    init_f: float = 0.3
    init_cr: float = 1.0
    m_f: np.ndarray = field(init=False)
    m_cr: np.ndarray = field(init=False)
    write_pos: int = field(init=False, default=0)

    def __post_init__(self):
        if self.H < 1:
            raise ValueError("memory size H must be positive")
        self.m_f = np.append(np.full(self.H, self.init_f), FALLBACK_F)
        self.m_cr = np.append(np.full(self.H, self.init_cr), FALLBACK_CR)

    @property
    def n_slots(self) -> int:
        return self.H + 1

    def copy(self) -> "MemoryBank":
        new = MemoryBank(self.H, self.init_f, self.init_cr)
        new.m_f = self.m_f.copy()
        new.m_cr = self.m_cr.copy()
        new.write_pos = self.write_pos
        return new


@dataclass
class AdaptState:
    success_rate: float = INITIAL_SR
    hybrid_rate: float = DEFAULT_RHO


@dataclass(frozen=True)
class SuccessRecord:
    F: float
    A: float
    delta: float
    branch: Branch


def uniform_index(rng, high, size):
    """``floor(u * high)`` for uniform ``u``; ``high`` may broadcast against ``size``."""
    u = np.asarray(rng.random(size), dtype=float).reshape(size)
    return np.minimum((u * high).astype(np.intp), np.asarray(high) - 1)


def _resample(draw, accept, size):
    """Draw ``size`` values, redrawing rejected ones until all pass ``accept``."""
    out = np.asarray(draw(size), dtype=float).reshape(-1)
    bad = ~accept(out)
    while bad.any():
        out[bad] = np.asarray(draw(int(bad.sum())), dtype=float).reshape(-1)
        bad = ~accept(out)
    return out


def _in_unit(v):
    return (v > 0.0) & (v <= 1.0)


def f_standard_centre(success_rate: float) -> float:
    return max(0.0, success_rate) ** (1.0 / 3.0)


def sample_F_standard(success_rate: float, rng, size=None):
    """Truncated normal around the cube root of the success rate, on (0, 1]."""
    centre = f_standard_centre(success_rate)
    n = 1 if size is None else int(size)
    out = _resample(lambda k: centre + F_STD_SIGMA * np.asarray(rng.standard_normal(k), dtype=float), _in_unit, n)
    return float(out[0]) if size is None else out


def sample_F_eb(bank: MemoryBank, slot, rng, size=None):
    """Cauchy(M_F[slot], 0.1): non-positive draws are redrawn, draws above 1 clamp to 1.

    ``slot`` may be an index array, in which case one value per entry is returned.
    """
    slots = np.atleast_1d(np.asarray(slot))
    if size is not None and slots.size == 1:
        slots = np.repeat(slots, int(size))
    centres = bank.m_f[slots]
    out = centres + F_EB_SCALE * np.asarray(rng.standard_cauchy(slots.size), dtype=float)
    bad = out <= 0.0
    while bad.any():
        out[bad] = centres[bad] + F_EB_SCALE * np.asarray(rng.standard_cauchy(int(bad.sum())), dtype=float)
        bad = out <= 0.0
    out = np.minimum(out, 1.0)
    return float(out[0]) if np.ndim(slot) == 0 and size is None else out


def eb_cr_floor(ledger: BudgetLedger) -> float:
    if ledger.nfe < 0.25 * ledger.max_fe:
        return 0.7
    if ledger.nfe < 0.5 * ledger.max_fe:
        return 0.6
    return 0.0


def sample_CR(bank: MemoryBank, slot, branch, ledger: BudgetLedger, rng, size=None):
    """Normal(M_CR[slot], 0.1) clipped to [0, 1], with staged floors on the EB branch.

    ``slot`` and ``branch`` may be arrays of equal length.
    """
    slots = np.atleast_1d(np.asarray(slot))
    if size is not None and slots.size == 1:
        slots = np.repeat(slots, int(size))
    branches = np.asarray(branch)
    z = np.asarray(rng.standard_normal(slots.size), dtype=float).reshape(slots.size)
    cr = np.minimum(np.maximum(bank.m_cr[slots] + CR_SIGMA * z, 0.0), 1.0)
    floor = eb_cr_floor(ledger)
    if floor > 0:
        eb = np.broadcast_to(branches == Branch.EB, cr.shape)
        cr[eb] = np.maximum(cr[eb], floor)
    return float(cr[0]) if np.ndim(slot) == 0 and size is None else cr


def pick_memory_slot(bank: MemoryBank, rng, size=None):
    if size is None:
        return int(uniform_index(rng, bank.n_slots, 1)[0])
    return uniform_index(rng, bank.n_slots, size)


def weighted_lehmer(values: np.ndarray, weights: np.ndarray) -> float | None:
    """``sum(w v^2) / sum(w v)``; ``None`` when the denominator vanishes."""
    den = float(np.sum(weights * values))
    if den == 0.0:
        return None
    return float(np.sum(weights * values * values) / den)


def update_memories(bank: MemoryBank, successes: Sequence[SuccessRecord]) -> MemoryBank:
    """Return a new bank with the current write slot moved toward the weighted Lehmer means."""
    new = bank.copy()
    if not successes:
        return new
    F = np.array([s.F for s in successes], dtype=float)
    A = np.array([s.A for s in successes], dtype=float)
    delta = np.array([s.delta for s in successes], dtype=float)
    w = delta / delta.sum()
    pos = new.write_pos
    lf = weighted_lehmer(F, w)
    if lf is not None:
        new.m_f[pos] = 0.5 * (new.m_f[pos] + lf)
    la = weighted_lehmer(A, w)
    if la is not None:
        new.m_cr[pos] = 0.5 * (new.m_cr[pos] + la)
    new.write_pos = (pos + 1) % new.H
    return new


def update_hybrid_rate(delta_eb: float, delta_std: float) -> float:
    if delta_eb > 0 and delta_std > 0:
        return delta_eb / (delta_eb + delta_std)
    return DEFAULT_RHO


def compute_success_rate(n_success: int, n_trials: int) -> float:
    if n_trials <= 0:
        raise ValueError("success rate needs at least one trial")
    if not 0 <= n_success <= n_trials:
        raise ValueError("n_success must lie in [0, n_trials]")
    return n_success / n_trials
