"""Acceptance checks; each test prints one PASS/FAIL line."""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from rdex_csop import benchmarks, cli, harness, stats
from rdex_csop.constraints import mean_violation_batch, truncate
from rdex_csop.engine import EngineConfig, generation, initialize, lpsr_size, run
from rdex_csop.harness import RunTrace

import test_engine as oracle
import test_stats as stat_oracle


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return emit


def test_criterion_1_friedman_reproduction(verdict):
    q, _, _ = stats.friedman_from_average_ranks((2.29, 2.39, 2.84, 2.48), 28)
    t, _, p_t = stats.friedman_from_average_ranks((1.61, 2.14, 2.89, 3.36), 28)
    o, _, _ = stats.friedman_from_average_ranks((2.11, 2.46, 2.66, 2.77), 28)
    checks = {
        "Q chi2=2.90": abs(q - 2.90) <= 0.02,
        "TTT chi2=30.47": abs(t - 30.47) <= 0.02,
        "TTT p=2.62e-6": abs(p_t - 2.62e-6) <= 0.1 * 2.62e-6,
        "obj chi2=4.25": abs(o - 4.25) <= 0.02,
    }
    detail = f"chi2 {q:.3f}/{t:.3f}/{o:.3f}, TTT p={p_t:.3e}; " + ", ".join(
        f"{k}:{'ok' if v else 'off'}" for k, v in checks.items()
    )
    verdict(1, all(checks.values()), detail)


def test_criterion_2_official_suite_not_reproducible(capsys):
    with capsys.disabled():
        print("\ncriterion 2: SKIP  official suite and competitor binaries unavailable; covered by criteria 3-8")
    pytest.skip("official benchmark suite not available at desk scale")


def _final(args):
    name, D, seed = args
    res = run(EngineConfig(n0=100, seed=seed), benchmarks.get_problem(name, D).spec, 80_000)
    return res.best_f, res.best_cv


def test_criterion_3_desk_scale_correctness(verdict):
    jobs = max(1, min(8, os.cpu_count() or 1))
    tasks = [("sphere-eq", 4, s) for s in range(25)] + [("sphere-linear-ineq", 10, s) for s in range(25)]
    with ProcessPoolExecutor(jobs) as pool:
        out = list(pool.map(_final, tasks))
    eq, lin = out[:25], out[25:]
    eq_ok = sum(cv == 0.0 and abs(f - 0.25) <= 1e-6 for f, cv in eq)
    eq_relaxed = sum(cv == 0.0 and abs(f - benchmarks.get_problem("sphere-eq", 4).relaxed_optimum_f) <= 1e-6 for f, cv in eq)
    lin_ok = sum(cv == 0.0 and abs(f - 10.0) <= 1e-4 for f, cv in lin)
    worst_eq = max(abs(f - 0.25) for f, _ in eq)
    detail = (
        f"sphere-eq {eq_ok}/25 within 1e-6 of 0.25 (max gap {worst_eq:.2e}; {eq_relaxed}/25 at the "
        f"tolerance-relaxed optimum), sphere-linear-ineq {lin_ok}/25 within 1e-4 of 10"
    )
    verdict(3, eq_ok >= 20 and lin_ok >= 20, detail)


def test_criterion_4_one_generation_oracle(verdict, scripted):
    h = oracle.hand_trace()
    rng = scripted(random=oracle.INIT_U + oracle.GEN_RANDOM, normal=oracle.GEN_NORMAL, cauchy=oracle.GEN_CAUCHY)
    state = initialize(EngineConfig(n0=4, n_min=4), oracle.tiny_problem(), 1000, rng=rng)
    rec = generation(state, oracle.tiny_problem())
    close = lambda a, b: np.allclose(a, b, rtol=0, atol=1e-12)
    checks = {
        "donors": np.array_equal(rec.donors, h["donors"]),
        "trials": np.array_equal(rec.trials, np.array(h["U"])),
        "repaired": np.array_equal(rec.repaired, np.array(h["R"])),
        "acceptance": list(rec.accepted) == h["acc"],
        "F/CR": close(rec.F, h["F"]) and close(rec.CR, h["CR"]),
        "memory": close(state.bank.m_f[0], h["m_f0"]) and close(state.bank.m_cr[0], h["m_cr0"]),
        "rho": close(state.adapt.hybrid_rate, h["rho"]),
        "script consumed": rng.exhausted(),
    }
    bad = [k for k, v in checks.items() if not v]
    verdict(4, not bad, "all fields match the hand trace" if not bad else f"mismatch: {bad}")


def test_criterion_5_selection_invariant(verdict):
    events = violations = 0
    runs = 0
    for seed in range(100):
        for name in benchmarks.list_problems():
            entry = benchmarks.get_problem(name, benchmarks.default_dim(name))
            spec = entry.spec
            state = initialize(EngineConfig(n0=100, seed=seed), spec, 40_000)
            while not state.ledger.exhausted:
                pf, pphi = state.f.copy(), state.phi.copy()
                rec = generation(state, spec)
                m = rec.n_evaluated
                f, g, h = spec.batch_evaluator(rec.repaired[:m])
                tphi = mean_violation_batch(g, h, state.config.violation)
                eps = rec.epsilon.epsilon
                pt, tt = truncate(pphi[:m], eps), truncate(tphi, eps)
                rule = (tt < pt) | ((tt == pt) & (f <= pf[:m]))
                acc = rec.accepted
                events += int(acc.sum())
                violations += int(np.sum(acc & ~rule)) + int(np.sum(~acc & rule))
            runs += 1
            if events >= 100_000:
                break
        if events >= 100_000:
            break
    verdict(5, events >= 100_000 and violations == 0,
            f"{events} replacements over {runs} runs, {violations} against the rule")


def test_criterion_6_schedule_invariants(verdict):
    bad_eps = bad_size = 0
    gens = 0
    finals = []
    for name in benchmarks.list_problems():
        D = benchmarks.default_dim(name)
        max_fe = 30_000
        cfg = EngineConfig(n0=120, seed=3)

        def hook(state, rec):
            nonlocal bad_eps, bad_size, gens
            gens += 1
            start = rec.nfe - rec.n_evaluated
            if start > 0.8 * max_fe and rec.epsilon.epsilon != 0.0:
                bad_eps += 1
            if state.size != lpsr_size(state.ledger, cfg.n0, cfg.n_min):
                bad_size += 1
            if state.ledger.exhausted:
                finals.append(state.size)

        run(cfg, benchmarks.get_problem(name, D).spec, max_fe, callback=hook)
    ok = bad_eps == 0 and bad_size == 0 and finals == [4] * len(benchmarks.list_problems())
    verdict(6, ok, f"{gens} generations: {bad_eps} late nonzero eps, {bad_size} size mismatches, final sizes {finals}")


def test_criterion_7_statistics_oracles(verdict):
    rng = np.random.default_rng(77)
    worst = 0.0
    a12_bad = 0
    for case in range(200):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 17 - n))
        m = min(m, 8) if n + m > 16 else m
        if case % 2:
            a, b = rng.integers(0, 5, n).astype(float), rng.integers(0, 5, m).astype(float)
        else:
            pool = rng.permutation(100)[: n + m].astype(float)
            a, b = pool[:n], pool[n:]
        worst = max(worst, abs(stats.wilcoxon_rank_sum(a, b).p_value - stat_oracle.enumerated_p(a, b)))
        x, y = rng.integers(0, 6, rng.integers(1, 12)), rng.integers(0, 6, rng.integers(1, 12))
        a12_bad += stats.vargha_delaney_a12(x, y) != stat_oracle.brute_a12(x, y)
    pts = [(c, c * 10, 5.0, 0.0) for c in range(1, 2001)]
    never = RunTrace("p", 0, 0, 2, 20000, 2000, pts)
    pinned = RunTrace("p", 0, 0, 2, 20000, 2000, [(c, n, 1.0, 0.0) for c, n, _, _ in pts])
    ttt = stats.time_to_target(never, 1.0, 6.0)
    area = stats.auc(pinned, 1.0)
    ok = worst <= 0.02 and a12_bad == 0 and ttt == 2001 and area == 0.0
    verdict(7, ok, f"max p gap {worst:.1e} over 200 cases, A12 mismatches {a12_bad}, TTT never={ttt}, AUC pinned={area}")


def test_criterion_8_determinism_and_resume(verdict, tmp_path):
    flags = ["--problems", "sphere-eq,mixed-eq-ineq", "--dim", "4", "--runs", "4", "--max-fe", "4000",
             "--n0", "40", "--checkpoints", "100", "--seed", "5"]
    for d in ("a", "b"):
        assert cli.main(["run", *flags, "--out", str(tmp_path / d)]) == 0
    plan = harness.load_plan(None, {"problems": "sphere-eq,mixed-eq-ineq", "dim": "4", "runs_per_problem": "4",
                                    "max_fe": "4000", "n0": "40", "n_checkpoints": "100", "base_seed": "5",
                                    "output_dir": str(tmp_path / "c")})
    harness.run_experiment(plan, limit=4)
    half = len(list((tmp_path / "c").glob("*.csv")))
    assert cli.main(["run", *flags, "--out", str(tmp_path / "c")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same_ab = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    same_ac = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "c" / n).read_bytes() for n in names)
    ok = len(names) == 8 and half == 4 and same_ab and same_ac
    verdict(8, ok, f"{len(names)} traces; repeat identical={same_ab}; resumed after {half} identical={same_ac}")
