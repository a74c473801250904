"""Experiment orchestration: solver x start x macro-replication, then aggregation."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimation import fixed_estimate
from ..rng import Role, StreamSpec
from ..solver import RunResult
from . import emit
from .config import ExperimentConfig, SolverSpec, build_problem, config_to_dict, solve
from .metrics import AggregateCurve, MetricError, ProfileCurve, objective_at_budget, progress_curve, solvability_profile

log = logging.getLogger(__name__)

EVAL_SEED_SALT = "post-hoc-evaluation"


def run_seed(master: int, start: int, solver: str, rep: int) -> int:
    """Per-run seed as a hash of (master seed, start, solver, replication)."""
    h = hashlib.blake2b(f"{master}|{start}|{solver}|{rep}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


@dataclass
class RunEntry:
    start: int
    solver: str
    rep: int
    seed: int
    result: RunResult | None = None
    error: str | None = None
    values: np.ndarray | None = None

    @property
    def run_id(self) -> str:
        return f"{self.solver}/s{self.start}/r{self.rep}"


class CRNEvaluator:
    """Mean objective over a fixed set of replications shared by every caller (paired comparisons)."""

    def __init__(self, oracle, reps: int, seed: int):
        self.oracle = oracle
        self.reps = reps
        self.spec = StreamSpec(seed, 0, 0, Role.EVAL)
        self._cache: dict[bytes, float] = {}

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key not in self._cache:
            self._cache[key] = fixed_estimate(self.oracle, x, self.reps, self.spec).f_bar
        return self._cache[key]


@dataclass
class ResultStore:
    config: ExperimentConfig
    entries: list[RunEntry]
    grid: np.ndarray
    references: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)

    def ok_entries(self):
        return [e for e in self.entries if e.error is None]

    def summary(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "budget_grid": self.grid.tolist(),
            "references": {str(k): list(v) for k, v in sorted(self.references.items())},
            "runs": [{"solver": e.solver, "start": e.start, "rep": e.rep, "seed": e.seed, "error": e.error,
                      "values": None if e.values is None else [float(v) for v in e.values],
                      "total_calls": None if e.result is None else e.result.total_calls,
                      "iterations": None if e.result is None else len(e.result.records)}
                     for e in self.entries],
            "curves": {k: {"mean": c.mean.tolist(), "half_width": c.half_width.tolist(), "n_runs": c.n_runs}
                       for k, c in sorted(self.curves.items())},
            "profiles": {k: {"fraction": p.fraction.tolist(), "n_pairs": p.n_pairs}
                         for k, p in sorted(self.profiles.items())},
        }


def _execute(job):
    raw_problem, spec, start_idx, x0, rep, seed, budget = job
    entry = RunEntry(start_idx, spec.name, rep, seed)
    try:
        oracle = build_problem(raw_problem)
        entry.result = solve(spec, oracle, np.asarray(x0), seed, budget)
    except Exception as exc:  # one failing run must not sink the experiment
        log.warning("run %s failed: %s", entry.run_id, exc)
        entry.error = f"{type(exc).__name__}: {exc}"
    return entry


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ResultStore:
    jobs = []
    for si, x0 in enumerate(cfg.starts):
        for spec in cfg.solvers:
            for rep in range(cfg.n_macroreps):
                jobs.append((cfg.problem, spec, si, x0, rep, run_seed(cfg.seed, si, spec.name, rep), cfg.budget))
    workers = cfg.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_execute, jobs))
    else:
        entries = [_execute(j) for j in jobs]
    entries.sort(key=lambda e: (e.solver, e.start, e.rep))
    store = ResultStore(cfg, entries, np.asarray(cfg.budget_grid, dtype=float))
    evaluate(store)
    aggregate(store)
    return store


def evaluate(store: ResultStore) -> None:
    """Objective-at-budget rows and per-start (f_start, f_ref) pairs."""
    cfg = store.config
    oracle = build_problem(cfg.problem)
    evaluator = None
    if oracle.truth(np.asarray(cfg.starts[0])) is None:
        evaluator = CRNEvaluator(oracle, cfg.eval_reps, run_seed(cfg.seed, -1, EVAL_SEED_SALT, 0))
    f_of = (lambda x: float(oracle.truth(np.asarray(x))[0])) if evaluator is None else evaluator
    for e in store.ok_entries():
        e.values = objective_at_budget(e.result, store.grid, evaluator)
    for si, x0 in enumerate(cfg.starts):
        f_start = f_of(x0)
        finals = [float(e.values.min()) for e in store.ok_entries() if e.start == si]
        store.references[si] = (f_start, min([f_start] + finals))


def aggregate(store: ResultStore) -> None:
    store.curves.clear()
    store.profiles.clear()
    for spec in store.config.solvers:
        rows = [e.values for e in store.ok_entries() if e.solver == spec.name]
        if len(rows) >= 2:
            store.curves[spec.name] = progress_curve(rows, store.grid)
        by_start: dict[int, list] = {}
        for e in store.ok_entries():
            if e.solver == spec.name:
                by_start.setdefault(e.start, []).append(e.values)
        try:
            store.profiles[spec.name] = solvability_profile(by_start, store.references,
                                                            store.config.gap_threshold, store.grid)
        except MetricError as exc:
            log.warning("no profile for %s: %s", spec.name, exc)


def profiles_from_summary(summary: dict, gap: float | None = None) -> dict[str, ProfileCurve]:
    """Recompute solvability profiles from a saved summary."""
    grid = np.asarray(summary["budget_grid"], dtype=float)
    refs = {int(k): tuple(v) for k, v in summary["references"].items()}
    gap = summary["config"]["gap_threshold"] if gap is None else gap
    by_solver: dict[str, dict[int, list]] = {}
    for r in summary["runs"]:
        if r["values"] is not None:
            by_solver.setdefault(r["solver"], {}).setdefault(r["start"], []).append(r["values"])
    return {s: solvability_profile(v, refs, gap, grid) for s, v in sorted(by_solver.items())}


def curve_series(curves: dict[str, AggregateCurve]):
    return [{"label": k, "x": c.budgets, "y": c.mean, "lo": c.lower, "hi": c.upper}
            for k, c in sorted(curves.items())]


def profile_series(profiles: dict[str, ProfileCurve]):
    return [{"label": k, "x": p.budgets, "y": p.fraction} for k, p in sorted(profiles.items())]


def save_store(store: ResultStore, out_dir, formats=("csv", "jsonl", "svg")) -> list[Path]:
    out = Path(out_dir)
    written = []
    rows = []
    for e in store.ok_entries():
        rows += emit.record_rows(e.result.records, {"solver": e.solver, "start": e.start, "rep": e.rep, "seed": e.seed})
    if "jsonl" in formats:
        written.append(emit.write_text(out / "trajectories.jsonl", emit.jsonl_text(rows)))
    if "csv" in formats:
        written.append(emit.write_text(out / "trajectories.csv", emit.csv_text(rows)))
    written.append(emit.write_text(out / "summary.json", json.dumps(store.summary(), indent=1) + "\n"))
    if "svg" in formats:
        if not store.curves and not store.profiles:
            raise emit.EmitError("no curves to plot")
        if store.curves:
            written.append(emit.write_text(out / "progress.svg", emit.svg_chart(
                curve_series(store.curves), "Progress (mean, 90% CI)", "oracle calls", "objective")))
        if store.profiles:
            written.append(emit.write_text(out / "profile.svg", emit.svg_chart(
                profile_series(store.profiles), f"Solvability ({store.config.gap_threshold:g} gap)",
                "oracle calls", "fraction solved")))
    return written
