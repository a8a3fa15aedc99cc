import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from rdex_csop import adaptation as ad
from rdex_csop.problem import BudgetLedger


def test_bank_layout():
    bank = ad.MemoryBank()
    np.testing.assert_array_equal(bank.m_f, [0.3] * 5 + [0.4])
    np.testing.assert_array_equal(bank.m_cr, [1.0] * 5 + [0.9])
    assert bank.n_slots == 6


def test_standard_F_centre():
    rng = np.random.default_rng(1)
    F = ad.sample_F_standard(0.216, rng, size=200_000)
    assert F.mean() == pytest.approx(0.6, abs=1e-3)
    assert F.std() == pytest.approx(0.05, abs=1e-3)
    assert F.min() > 0 and F.max() <= 1


def test_standard_F_resamples_edge(scripted):
    rng = scripted(normal=[-30.0, 5.0, -0.4])
    # centre 1: first draw lands below 0, second above 1, third inside
    assert ad.sample_F_standard(1.0, rng) == pytest.approx(1.0 - 0.05 * 0.4)


def test_eb_F_resample_and_clamp(scripted):
    bank = ad.MemoryBank()
    rng = scripted(cauchy=[-5.0, 20.0])
    assert ad.sample_F_eb(bank, 0, rng) == 1.0
    rng = scripted(cauchy=[-4.0, 1.0])
    assert ad.sample_F_eb(bank, 0, rng) == pytest.approx(0.4)


@given(st.integers(0, 5), st.integers(0, 2**32 - 1))
def test_eb_F_in_unit(slot, seed):
    F = ad.sample_F_eb(ad.MemoryBank(), slot, np.random.default_rng(seed), size=50)
    assert np.all((F > 0) & (F <= 1))


def test_cr_floor_stages():
    assert ad.eb_cr_floor(BudgetLedger(100, 24)) == 0.7
    assert ad.eb_cr_floor(BudgetLedger(100, 25)) == 0.6
    assert ad.eb_cr_floor(BudgetLedger(100, 50)) == 0.0


def test_cr_clip_and_floor(scripted):
    bank = ad.MemoryBank()
    bank.m_cr[:] = 0.5
    rng = scripted(normal=[-9.0, -9.0, 9.0])
    cr = ad.sample_CR(bank, np.array([0, 0, 0]), np.array([0, 1, 0]), BudgetLedger(100, 0), rng, size=3)
    np.testing.assert_array_equal(cr, [0.0, 0.7, 1.0])


def test_slot_pick_uniform():
    rng = np.random.default_rng(5)
    slots = ad.pick_memory_slot(ad.MemoryBank(), rng, size=60_000)
    counts = np.bincount(slots, minlength=6)
    assert counts.size == 6
    assert sps.chisquare(counts).pvalue > 1e-3


def test_uniform_index_edges(scripted):
    rng = scripted(random=[0.0, 0.999999999, 0.5])
    np.testing.assert_array_equal(ad.uniform_index(rng, 4, 3), [0, 3, 2])


def test_lehmer_and_zero_denominator():
    assert ad.weighted_lehmer(np.array([0.2, 0.4]), np.array([0.5, 0.5])) == pytest.approx(0.2 / 0.6)
    assert ad.weighted_lehmer(np.zeros(2), np.array([0.5, 0.5])) is None


def test_memory_update_by_hand():
    bank = ad.MemoryBank()
    succ = [
        ad.SuccessRecord(0.5, 0.5, 1.0, ad.Branch.STANDARD),
        ad.SuccessRecord(0.9, 1.0, 3.0, ad.Branch.EB),
    ]
    new = ad.update_memories(bank, succ)
    lf = (0.25 * 0.25 + 0.75 * 0.81) / (0.25 * 0.5 + 0.75 * 0.9)
    la = (0.25 * 0.25 + 0.75 * 1.0) / (0.25 * 0.5 + 0.75 * 1.0)
    assert new.m_f[0] == pytest.approx((0.3 + lf) / 2, abs=1e-12)
    assert new.m_cr[0] == pytest.approx((1.0 + la) / 2, abs=1e-12)
    assert new.write_pos == 1
    assert bank.m_f[0] == 0.3


def test_memory_cr_kept_when_ratios_vanish():
    new = ad.update_memories(ad.MemoryBank(), [ad.SuccessRecord(0.5, 0.0, 1.0, ad.Branch.EB)])
    assert new.m_cr[0] == 1.0 and new.m_f[0] == pytest.approx(0.4)


def test_memory_write_position_wraps_and_skips_fallback():
    bank = ad.MemoryBank()
    rec = [ad.SuccessRecord(0.5, 0.5, 1.0, ad.Branch.EB)]
    for _ in range(7):
        bank = ad.update_memories(bank, rec)
    assert bank.write_pos == 2
    assert bank.m_f[5] == 0.4 and bank.m_cr[5] == 0.9


def test_no_successes_leaves_bank():
    bank = ad.MemoryBank()
    new = ad.update_memories(bank, [])
    assert new.write_pos == 0 and np.array_equal(new.m_f, bank.m_f)


def test_hybrid_rate():
    assert ad.update_hybrid_rate(1.0, 3.0) == 0.25
    assert ad.update_hybrid_rate(0.0, 3.0) == 0.7
    assert ad.update_hybrid_rate(2.0, 0.0) == 0.7


def test_success_rate_validation():
    assert ad.compute_success_rate(3, 4) == 0.75
    with pytest.raises(ValueError):
        ad.compute_success_rate(0, 0)
    with pytest.raises(ValueError):
        ad.compute_success_rate(5, 4)
