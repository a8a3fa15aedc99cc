"""Seeded batches of runs, checkpoint schedules, trace files and median targets.

Trace files hold one (problem, run) each::

    # problem,run,seed,D,max_fe,n_checkpoints
    # sphere-eq,0,7,4,80000,2000
    checkpoint,nfe,best_f,best_cv
    1,40,1.2345,0.0
    ...

Floats are written with ``repr`` (shortest round-trip form).  A file is
only ever created complete (write to a temporary name, then rename), so an
interrupted experiment resumes by skipping existing files.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import benchmarks
from .constraints import ViolationConfig, feasibility_aware_quality, quality_offset
from .engine import EngineConfig, run

log = logging.getLogger(__name__)

TRACE_HEADER = "# problem,run,seed,D,max_fe,n_checkpoints"
TRACE_COLUMNS = "checkpoint,nfe,best_f,best_cv"


class TraceFormatError(ValueError):
    pass


class RunFailed(RuntimeError):
    def __init__(self, problem: str, run_id: int, cause):
        super().__init__(f"run {run_id} of {problem} failed: {cause}")
        self.problem = problem
        self.run_id = run_id
        self.cause = str(cause)

    def __reduce__(self):
        return RunFailed, (self.problem, self.run_id, self.cause)


@dataclass
class ExperimentPlan:
    problems: List[str]
    dim: int
    runs_per_problem: int = 25
    max_fe: Optional[int] = None
    n_checkpoints: int = 2000
    base_seed: int = 0
    engine_config: EngineConfig = field(default_factory=EngineConfig)
    output_dir: Path = Path("traces")

    def __post_init__(self):
        if self.max_fe is None:
            self.max_fe = 20000 * self.dim
        self.output_dir = Path(self.output_dir)
        if self.n_checkpoints < 1:
            raise ValueError("n_checkpoints must be at least 1")
        if self.max_fe < self.n_checkpoints:
            raise ValueError("max_fe must be at least n_checkpoints")
        if self.runs_per_problem < 1:
            raise ValueError("runs_per_problem must be positive")

    def seed_for(self, run_id: int) -> int:
        return self.base_seed + run_id


@dataclass
class RunTrace:
    problem: str
    run_id: int
    seed: int
    dim: int
    max_fe: int
    n_checkpoints: int
    points: List[Tuple[int, int, float, float]]

    @property
    def final_f(self) -> float:
        return self.points[-1][2]

    @property
    def final_cv(self) -> float:
        return self.points[-1][3]

    @property
    def best_f(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])

    @property
    def best_cv(self) -> np.ndarray:
        return np.array([p[3] for p in self.points])


@dataclass
class TargetTable:
    targets: Dict[str, float]
    derivation: Dict[str, str]

    def __getitem__(self, problem: str) -> float:
        return self.targets[problem]


def plan_checkpoints(max_fe: int, n: int) -> np.ndarray:
    """nfe thresholds ``ceil(c * max_fe / n)`` for ``c = 1..n``."""
    if n < 1 or max_fe < n:
        raise ValueError(f"need 1 <= n <= max_fe, got n={n}, max_fe={max_fe}")
    c = np.arange(1, n + 1, dtype=np.int64)
    return (c * max_fe + n - 1) // n


def trace_path(output_dir: Path, problem: str, run_id: int) -> Path:
    return Path(output_dir) / f"{problem}__run{run_id:03d}.csv"


def format_trace(trace: RunTrace) -> str:
    lines = [
        TRACE_HEADER,
        f"# {trace.problem},{trace.run_id},{trace.seed},{trace.dim},{trace.max_fe},{trace.n_checkpoints}",
        TRACE_COLUMNS,
    ]
    lines += [f"{c},{nfe},{f!r},{cv!r}" for c, nfe, f, cv in trace.points]
    return "\n".join(lines) + "\n"


def write_trace(trace: RunTrace, output_dir: Path) -> Path:
    path = trace_path(output_dir, trace.problem, trace.run_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".csv.tmp")
    tmp.write_text(format_trace(trace))
    os.replace(tmp, path)
    return path


def read_trace(path) -> RunTrace:
    path = Path(path)
    lines = path.read_text().splitlines()
    if len(lines) < 3 or lines[0].strip() != TRACE_HEADER or lines[2].strip() != TRACE_COLUMNS:
        raise TraceFormatError(f"{path}: not a trace file")
    meta = lines[1].lstrip("#").strip().split(",")
    if len(meta) != 6:
        raise TraceFormatError(f"{path}: malformed metadata line")
    problem, run_id, seed, dim, max_fe, n_cp = meta
    points = []
    for row in csv.reader(lines[3:]):
        if not row:
            continue
        c, nfe, f, cv = row
        points.append((int(c), int(nfe), float(f), float(cv)))
    trace = RunTrace(problem, int(run_id), int(seed), int(dim), int(max_fe), int(n_cp), points)
    if len(points) != trace.n_checkpoints or [p[0] for p in points] != list(range(1, trace.n_checkpoints + 1)):
        raise TraceFormatError(f"{path}: incomplete trace ({len(points)} of {trace.n_checkpoints} checkpoints)")
    return trace


def read_trace_dir(directory) -> List[RunTrace]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory}: no such directory")
    traces = [read_trace(p) for p in sorted(directory.glob("*.csv"))]
    traces.sort(key=lambda t: (t.problem, t.run_id))
    return traces


def execute_run(problem: str, dim: int, run_id: int, seed: int, max_fe: int, n_checkpoints: int, config: EngineConfig) -> RunTrace:
    entry = benchmarks.get_problem(problem, dim)
    cfg = dataclasses.replace(config, seed=seed)
    result = run(cfg, entry.spec, max_fe, plan_checkpoints(max_fe, n_checkpoints))
    return RunTrace(problem, run_id, seed, dim, max_fe, n_checkpoints, result.points)


def _run_and_write(args) -> Path:
    *run_args, output_dir = args
    try:
        trace = execute_run(*run_args)
    except Exception as exc:
        raise RunFailed(run_args[0], run_args[2], exc) from exc
    return write_trace(trace, output_dir)


def pending_runs(plan: ExperimentPlan) -> List[Tuple[str, int]]:
    todo = []
    for problem in plan.problems:
        for r in range(plan.runs_per_problem):
            path = trace_path(plan.output_dir, problem, r)
            if path.exists():
                try:
                    read_trace(path)
                    continue
                except TraceFormatError:
                    log.warning("rerunning damaged trace %s", path)
            todo.append((problem, r))
    return todo


def run_experiment(plan: ExperimentPlan, jobs: int = 1, limit: Optional[int] = None) -> List[RunTrace]:
    """Execute every missing (problem, run) of ``plan`` and return all its traces.

    ``limit`` caps how many pending runs are executed in this call, which is
    how an interrupted experiment is simulated.
    """
    for problem in plan.problems:
        benchmarks.get_problem(problem, plan.dim)
    plan.output_dir.mkdir(parents=True, exist_ok=True)
    todo = pending_runs(plan)
    if limit is not None:
        todo = todo[:limit]
    tasks = [
        (p, plan.dim, r, plan.seed_for(r), plan.max_fe, plan.n_checkpoints, plan.engine_config, plan.output_dir)
        for p, r in todo
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for path in pool.map(_run_and_write, tasks):
                log.info("wrote %s", path)
    else:
        for task in tasks:
            log.info("wrote %s", _run_and_write(task))
    return [
        read_trace(trace_path(plan.output_dir, p, r))
        for p in plan.problems
        for r in range(plan.runs_per_problem)
        if trace_path(plan.output_dir, p, r).exists()
    ]


def group_by_problem(traces: Iterable[RunTrace]) -> Dict[str, List[RunTrace]]:
    groups: Dict[str, List[RunTrace]] = {}
    for t in traces:
        groups.setdefault(t.problem, []).append(t)
    return groups


def derive_median_targets(traces: Sequence[RunTrace]) -> TargetTable:
    """Per problem, the median feasibility-aware final quality of the given runs."""
    if not traces:
        raise ValueError("cannot derive targets from an empty trace set")
    targets, how = {}, {}
    for problem, group in sorted(group_by_problem(traces).items()):
        b_p = quality_offset([t.final_f for t in group])
        q = [feasibility_aware_quality(t.final_f, t.final_cv, b_p) for t in group]
        targets[problem] = float(np.median(q))
        how[problem] = "median-of-baseline"
    return TargetTable(targets, how)


def write_targets(table: TargetTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["problem", "target"])
        for problem, tgt in table.targets.items():
            w.writerow([problem, repr(tgt)])


def read_targets(path) -> TargetTable:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(rows[0]) != {"problem", "target"}:
        raise ValueError(f"{path}: expected columns problem,target")
    return TargetTable({r["problem"]: float(r["target"]) for r in rows}, {r["problem"]: "explicit" for r in rows})


# --- flat key=value configuration -------------------------------------------

_ENGINE_KEYS = {
    "n0": int,
    "n_min": int,
    "H": int,
    "rho_init": float,
    "perturb_prob": float,
    "perturb_scale": float,
    "pbest_frac": float,
    "rank_bias_lambda": float,
}
_VIOLATION_KEYS = {"eps_eq": float, "eta": float}
_PLAN_KEYS = {
    "problems": lambda v: [p.strip() for p in v.split(",") if p.strip()],
    "dim": int,
    "runs_per_problem": int,
    "max_fe": int,
    "n_checkpoints": int,
    "base_seed": int,
    "output_dir": Path,
}


def parse_config(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _ENGINE_KEYS and key not in _VIOLATION_KEYS and key not in _PLAN_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def plan_from_settings(settings: Dict[str, str]) -> ExperimentPlan:
    plan_kw = {k: _PLAN_KEYS[k](v) for k, v in settings.items() if k in _PLAN_KEYS}
    engine_kw = {k: _ENGINE_KEYS[k](v) for k, v in settings.items() if k in _ENGINE_KEYS}
    viol_kw = {k: _VIOLATION_KEYS[k](v) for k, v in settings.items() if k in _VIOLATION_KEYS}
    if "problems" not in plan_kw or "dim" not in plan_kw:
        raise ValueError("configuration needs at least 'problems' and 'dim'")
    engine_kw["violation"] = ViolationConfig(**viol_kw)
    return ExperimentPlan(engine_config=EngineConfig(**engine_kw), **plan_kw)


def load_plan(path=None, overrides: Optional[Dict[str, str]] = None) -> ExperimentPlan:
    settings = parse_config(Path(path).read_text()) if path else {}
    settings.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return plan_from_settings(settings)
