"""Per-run metrics and cross-algorithm statistics.

Conventions follow minimisation throughout: a "win" means the reference
algorithm's values are smaller, and A12 above 0.5 favours the reference.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaincc
from scipy.stats import rankdata

from .constraints import feasibility_aware_quality, quality_offset

METRICS = ("Q", "TTT", "AUC")
# above this combined size the rank-sum p-value uses the normal approximation
EXACT_MAX_TOTAL = 30


class Verdict(enum.Enum):
    WIN = "+"
    TIE = "="
    LOSS = "-"


@dataclass(frozen=True)
class MetricRow:
    problem: str
    algorithm: str
    run_id: int
    quality: float
    ttt: int
    auc: float

    def value(self, metric: str) -> float:
        return {"Q": self.quality, "TTT": float(self.ttt), "AUC": self.auc}[metric]


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # not a pytest class

    statistic: float
    p_value: float
    verdict: Verdict
    a12: float


# --- per-run metrics --------------------------------------------------------

def time_to_target(trace, target: float, b_p: float) -> int:
    """First checkpoint whose feasibility-aware quality is at or below ``target``.

    Runs that never get there score ``n_checkpoints + 1``.
    """
    for c, _nfe, f, cv in trace.points:
        if feasibility_aware_quality(f, cv, b_p) <= target:
            return int(c)
    return trace.n_checkpoints + 1


def auc(trace, target: float) -> float:
    f = np.array([p[2] for p in trace.points], dtype=float)
    return float(np.mean(np.log10(1.0 + np.maximum(f - target, 0.0))))


# --- rank-sum test ----------------------------------------------------------

def _exact_rank_sum_p(ranks2: np.ndarray, n: int, w2: int) -> float:
    """Two-sided permutation p-value of a rank sum, by counting subsets.

    ``ranks2`` are doubled midranks (integers) of the pooled sample and
    ``w2`` the doubled rank sum of the first sample.  The p-value is the
    share of size-``n`` subsets whose sum lies at least as far from the
    mean as ``w2``.
    """
    total = int(ranks2.sum())
    counts = np.zeros((n + 1, total + 1))
    counts[0, 0] = 1.0
    for r in ranks2:
        r = int(r)
        counts[1:, r:] += counts[:-1, : total + 1 - r]
    dist = counts[n]
    N = ranks2.size
    mean2 = n * (N + 1)  # doubled expected rank sum
    sums = np.arange(total + 1)
    extreme = np.abs(sums - mean2) >= abs(w2 - mean2)
    return float(min(1.0, dist[extreme].sum() / dist.sum()))


def _normal_rank_sum_p(ranks: np.ndarray, n: int, w: float) -> float:
    N = ranks.size
    m = N - n
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (N * (N - 1)) if N > 1 else 0.0
    var = n * m / 12.0 * ((N + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = max(0.0, abs(w - n * (N + 1) / 2.0) - 0.5) / math.sqrt(var)
    return float(min(1.0, math.erfc(z / math.sqrt(2.0))))


def vargha_delaney_a12(ours: Sequence[float], theirs: Sequence[float]) -> float:
    """P(theirs > ours) + 0.5 P(tie); above 0.5 favours ``ours`` when minimising."""
    a = np.asarray(ours, dtype=float)
    b = np.asarray(theirs, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("A12 needs two non-empty samples")
    greater = np.sum(b[None, :] > a[:, None])
    ties = np.sum(b[None, :] == a[:, None])
    return float((greater + 0.5 * ties) / (a.size * b.size))


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TestOutcome:
    """Two-sided rank-sum test of ``a`` against ``b`` with midranks for ties.

    The p-value is exact (full permutation distribution) while the pooled
    size is at most ``EXACT_MAX_TOTAL`` and otherwise uses the normal
    approximation with tie-corrected variance and continuity correction.
    ``statistic`` is the rank sum of ``a``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("rank-sum test needs two non-empty samples")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    w = float(ranks[: a.size].sum())
    a12 = vargha_delaney_a12(a, b)
    if np.all(pooled == pooled[0]):
        return TestOutcome(w, 1.0, Verdict.TIE, a12)
    if pooled.size <= EXACT_MAX_TOTAL:
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        p = _exact_rank_sum_p(ranks2, a.size, int(round(2 * w)))
    else:
        p = _normal_rank_sum_p(ranks, a.size, w)
    verdict = Verdict.TIE
    if p < alpha:
        verdict = _direction(a, b, w, pooled.size)
    return TestOutcome(w, p, verdict, a12)


def _direction(a: np.ndarray, b: np.ndarray, w: float, N: int) -> Verdict:
    ma, mb = np.median(a), np.median(b)
    if ma != mb:
        return Verdict.WIN if ma < mb else Verdict.LOSS
    # equal medians: fall back to the mean rank
    expected = a.size * (N + 1) / 2.0
    if w == expected:
        return Verdict.TIE
    return Verdict.WIN if w < expected else Verdict.LOSS


def holm_correct(p_values: Sequence[float], alpha: float = 0.05) -> List[bool]:
    """Holm step-down rejections, returned in input order."""
    p = np.asarray(p_values, dtype=float)
    m = p.size
    reject = np.zeros(m, dtype=bool)
    for step, idx in enumerate(np.argsort(p, kind="stable")):
        if p[idx] <= alpha / (m - step):
            reject[idx] = True
        else:
            break
    return reject.tolist()


# --- Friedman ---------------------------------------------------------------

def chi2_sf(x: float, df: int) -> float:
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def friedman_from_average_ranks(avg_ranks: Sequence[float], n: int) -> Tuple[float, int, float]:
    r = np.asarray(avg_ranks, dtype=float)
    k = r.size
    if k < 2 or n < 1:
        raise ValueError("need at least two algorithms and one problem")
    chi2 = 12.0 * n / (k * (k + 1)) * (np.sum(r * r) - k * (k + 1) ** 2 / 4.0)
    chi2 = max(0.0, float(chi2))
    return chi2, k - 1, chi2_sf(chi2, k - 1)


def friedman(values) -> Tuple[float, int, float, np.ndarray]:
    """Classical Friedman test on a problems x algorithms matrix (smaller is better)."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
        raise ValueError("need a matrix with at least two problems and two algorithms")
    ranks = rankdata(v, axis=1)
    avg = ranks.mean(axis=0)
    chi2, df, p = friedman_from_average_ranks(avg, v.shape[0])
    return chi2, df, p, avg


# --- report -----------------------------------------------------------------

@dataclass
class ComparisonRow:
    problem: str
    competitor: str
    metric: str
    ours_mean: float
    ours_sd: float
    theirs_mean: float
    theirs_sd: float
    outcome: TestOutcome
    holm_verdict: Verdict = Verdict.TIE


@dataclass
class StatReport:
    reference: str
    competitors: List[str]
    problems: List[str]
    rows: List[ComparisonRow]
    wtl: Dict[Tuple[str, str], Tuple[int, int, int]]
    wtl_holm: Dict[Tuple[str, str], Tuple[int, int, int]]
    median_a12: Dict[Tuple[str, str], float]
    friedman: Dict[str, Optional[Tuple[float, int, float, np.ndarray]]]
    alpha: float = 0.05
    notes: List[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([
            "problem", "competitor", "metric", "ours_mean", "ours_sd", "theirs_mean", "theirs_sd",
            "rank_sum", "p_value", "verdict", "holm_verdict", "a12",
        ])
        for r in self.rows:
            o = r.outcome
            w.writerow([
                r.problem, r.competitor, r.metric, repr(r.ours_mean), repr(r.ours_sd),
                repr(r.theirs_mean), repr(r.theirs_sd), repr(o.statistic), repr(o.p_value),
                o.verdict.value, r.holm_verdict.value, repr(o.a12),
            ])
        return buf.getvalue()

    @staticmethod
    def _width(competitor: str) -> int:
        return max(16, len(competitor) + 7)

    def to_text(self) -> str:
        out = [f"reference: {self.reference}  alpha: {self.alpha}"]
        out += [f"note: {n}" for n in self.notes]
        for metric in METRICS:
            out.append("")
            out.append(f"== {metric} ==")
            header = f"{'problem':<24}{self.reference + ' mean':>14}{'sd':>11}"
            for c in self.competitors:
                header += f"{c + ' mean':>{self._width(c)}}{'sd':>11}{'W':>3}"
            out.append(header)
            for p in self.problems:
                rows = {r.competitor: r for r in self.rows if r.problem == p and r.metric == metric}
                first = rows[self.competitors[0]]
                line = f"{p:<24}{first.ours_mean:>14.4e}{first.ours_sd:>11.2e}"
                for c in self.competitors:
                    r = rows[c]
                    line += f"{r.theirs_mean:>{self._width(c)}.4e}{r.theirs_sd:>11.2e}{r.outcome.verdict.value:>3}"
                out.append(line)
            footer = f"{'W/T/L':<24}{'':>25}"
            for c in self.competitors:
                footer += f"{'/'.join(map(str, self.wtl[(c, metric)])):>{self._width(c) + 14}}"
            out.append(footer)
            holm = f"{'W/T/L (Holm)':<24}{'':>25}"
            for c in self.competitors:
                holm += f"{'/'.join(map(str, self.wtl_holm[(c, metric)])):>{self._width(c) + 14}}"
            out.append(holm)
            a12 = f"{'median A12':<24}{'':>25}"
            for c in self.competitors:
                a12 += f"{self.median_a12[(c, metric)]:>{self._width(c) + 14}.2f}"
            out.append(a12)
            fr = self.friedman[metric]
            if fr is None:
                out.append("Friedman: n/a (needs at least two problems)")
            else:
                chi2, df, p, avg = fr
                ranks = ", ".join(f"{a}={r:.2f}" for a, r in zip([self.reference] + self.competitors, avg))
                out.append(f"Friedman: chi2={chi2:.2f}, df={df}, p={p:.3g}; average ranks: {ranks}")
        return "\n".join(out) + "\n"


def _wtl(verdicts: Sequence[Verdict]) -> Tuple[int, int, int]:
    return (
        sum(v is Verdict.WIN for v in verdicts),
        sum(v is Verdict.TIE for v in verdicts),
        sum(v is Verdict.LOSS for v in verdicts),
    )


def build_report(rows: Sequence[MetricRow], alpha: float = 0.05, reference: Optional[str] = None) -> StatReport:
    """Compare the reference algorithm against every other one, per problem and metric.

    ``reference`` defaults to the algorithm of the first row.
    """
    if not rows:
        raise ValueError("no metric rows")
    algorithms = list(dict.fromkeys(r.algorithm for r in rows))
    reference = reference or algorithms[0]
    competitors = [a for a in algorithms if a != reference]
    if not competitors:
        raise ValueError("need at least two algorithms")
    by_alg: Dict[str, Dict[str, List[MetricRow]]] = {}
    for r in rows:
        by_alg.setdefault(r.algorithm, {}).setdefault(r.problem, []).append(r)
    problems = sorted(by_alg[reference])
    for a in algorithms:
        if sorted(by_alg[a]) != problems:
            raise ValueError(f"algorithm {a!r} covers a different problem set than {reference!r}")

    out_rows: List[ComparisonRow] = []
    wtl, wtl_holm, med_a12 = {}, {}, {}
    for c in competitors:
        for metric in METRICS:
            block = []
            for p in problems:
                ours = np.array([r.value(metric) for r in by_alg[reference][p]])
                theirs = np.array([r.value(metric) for r in by_alg[c][p]])
                res = wilcoxon_rank_sum(ours, theirs, alpha)
                block.append(ComparisonRow(
                    p, c, metric,
                    float(ours.mean()), float(ours.std(ddof=1)) if ours.size > 1 else 0.0,
                    float(theirs.mean()), float(theirs.std(ddof=1)) if theirs.size > 1 else 0.0,
                    res,
                ))
            rejected = holm_correct([b.outcome.p_value for b in block], alpha)
            for b, rej in zip(block, rejected):
                if rej:
                    b.holm_verdict = b.outcome.verdict
            wtl[(c, metric)] = _wtl([b.outcome.verdict for b in block])
            wtl_holm[(c, metric)] = _wtl([b.holm_verdict for b in block])
            med_a12[(c, metric)] = float(np.median([b.outcome.a12 for b in block]))
            out_rows.extend(block)

    fried = {}
    for metric in METRICS:
        if len(problems) < 2:
            fried[metric] = None
            continue
        medians = np.array([
            [np.median([r.value(metric) for r in by_alg[a][p]]) for a in [reference] + competitors]
            for p in problems
        ])
        fried[metric] = friedman(medians)
    return StatReport(reference, competitors, problems, out_rows, wtl, wtl_holm, med_a12, fried, alpha)


def metric_rows(traces_by_algorithm: Dict[str, Sequence], targets) -> List[MetricRow]:
    """Q, TTT and AUC for every run; ``B_p`` pools final objectives over all algorithms."""
    finals: Dict[str, List[float]] = {}
    for traces in traces_by_algorithm.values():
        for t in traces:
            finals.setdefault(t.problem, []).append(t.final_f)
    b = {p: quality_offset(v) for p, v in finals.items()}
    rows = []
    for alg, traces in traces_by_algorithm.items():
        for t in traces:
            tgt = targets[t.problem]
            rows.append(MetricRow(
                t.problem, alg, t.run_id,
                feasibility_aware_quality(t.final_f, t.final_cv, b[t.problem]),
                time_to_target(t, tgt, b[t.problem]),
                auc(t, tgt),
            ))
    return rows
