"""Aggregation of runs: progress curves, solvability profiles and complexity slopes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


@dataclass
class AggregateCurve:
    budgets: np.ndarray
    mean: np.ndarray
    half_width: np.ndarray
    n_runs: int

    @property
    def lower(self):
        return self.mean - self.half_width

    @property
    def upper(self):
        return self.mean + self.half_width


@dataclass
class ProfileCurve:
    budgets: np.ndarray
    fraction: np.ndarray
    n_pairs: int


@dataclass
class SlopeEstimate:
    slope: float
    intercept: float
    ci: tuple[float, float] | None
    n_points: int
    eps_used: list


def t_half_width(values, level: float = 0.90, axis: int = 0):
    """Half-width of the two-sided t confidence interval of the mean."""
    v = np.asarray(values, dtype=float)
    n = v.shape[axis]
    if n < 2:
        raise MetricError("a confidence interval needs at least two runs")
    q = stats.t.ppf(0.5 + level / 2, n - 1)
    return q * v.std(axis=axis, ddof=1) / math.sqrt(n)


def best_so_far_at(budgets, values, grid, start_value: float) -> np.ndarray:
    """Step-function lookup of the running minimum of ``values`` at each grid budget.

    ``budgets[i]`` is when ``values[i]`` became available; before the first
    entry the start value applies.  Checkpoints past the last entry carry the
    last value forward.
    """
    b = np.asarray(budgets, dtype=float)
    v = np.minimum.accumulate(np.concatenate([[start_value], np.asarray(values, dtype=float)]))
    idx = np.searchsorted(b, np.asarray(grid, dtype=float), side="right")
    return v[idx]


def objective_at_budget(run, grid, evaluator=None) -> np.ndarray:
    """Best objective among incumbents accepted by each checkpoint.

    Without ``evaluator`` the true objective of every incumbent is used.
    With one, only the incumbent in force at each checkpoint is evaluated and
    the running minimum taken over checkpoints.
    """
    grid = np.asarray(grid, dtype=float)
    if evaluator is None:
        if run.truth_f0 is None:
            raise MetricError("run has no truth values; pass an evaluator")
        pts = [(r.budget_cum, r.truth_f) for r in run.records if r.accept != "U" and r.truth_f is not None]
        b = [p[0] for p in pts]
        v = [p[1] for p in pts]
        return best_so_far_at(b, v, grid, run.truth_f0)
    vals = np.array([evaluator(run.incumbent_at(g)) for g in grid])
    return np.minimum.accumulate(vals)


def progress_curve(runs, budget_grid, evaluator=None, level: float = 0.90) -> AggregateCurve:
    """Pointwise mean and t-interval of objective-at-budget across runs.

    ``runs`` holds run results or already-evaluated value rows on the grid.
    """
    grid = np.asarray(budget_grid, dtype=float)
    rows = [np.asarray(r, dtype=float) if not hasattr(r, "records") else objective_at_budget(r, grid, evaluator)
            for r in runs]
    if len(rows) < 2:
        raise MetricError("a progress curve needs at least two runs")
    V = np.vstack(rows)
    if V.shape[1] != grid.size:
        raise MetricError("value rows do not match the budget grid")
    return AggregateCurve(grid, V.mean(axis=0), t_half_width(V, level), V.shape[0])


def solvability_profile(runs_by_start: dict, references: dict, gap: float, budget_grid) -> ProfileCurve:
    """Fraction of (start, run) pairs within ``gap`` of the reference at each budget.

    ``runs_by_start`` maps a start id to value rows on the grid (best so far);
    ``references`` maps the same id to ``(f_start, f_ref)``.
    """
    if not 0 < gap < 1:
        raise MetricError("gap must lie in (0, 1)")
    grid = np.asarray(budget_grid, dtype=float)
    hits, total = np.zeros(grid.size), 0
    for sid in sorted(runs_by_start):
        f_start, f_ref = references[sid]
        span = f_start - f_ref
        if span <= 0:
            log.warning("start %s excluded: start value equals the reference", sid)
            continue
        for row in runs_by_start[sid]:
            row = np.minimum.accumulate(np.asarray(row, dtype=float))
            hits += (row - f_ref) <= gap * span
            total += 1
    if total == 0:
        raise MetricError("no usable (start, run) pairs")
    return ProfileCurve(grid, hits / total, total)


def _records(traj):
    return traj.records if hasattr(traj, "records") else traj


def hitting_times(traj, eps_grid, truth_g0: float | None = None):
    """(T_eps, W_eps) per eps: iterations and cumulative oracle calls to reach truth |grad f| <= eps.

    Entries are None when eps is never reached.  A start that already meets
    eps gives T = 0.
    """
    recs = _records(traj)
    g0 = getattr(traj, "truth_g0", truth_g0)
    out = []
    for eps in eps_grid:
        if g0 is not None and g0 <= eps:
            out.append((0, getattr(traj, "init_calls", 0)))
            continue
        hit = next((i for i, r in enumerate(recs) if r.truth_g_norm is not None and r.truth_g_norm <= eps), None)
        out.append((None, None) if hit is None else (hit + 1, recs[hit].budget_cum))
    return out


def _fit(xs, ys):
    A = np.column_stack([xs, np.ones_like(xs)])
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    return float(coef[0]), float(coef[1])


def complexity_slope(trajectories, eps_grid, which: str = "T", n_boot: int = 1000,
                     level: float = 0.90, seed: int = 0) -> SlopeEstimate:
    """Least-squares slope of log T_eps (or log W_eps) against log(1/eps).

    Pairs from all trajectories are pooled; eps values never reached (or
    reached at T = 0) are dropped.  With more than one trajectory a bootstrap
    over trajectories gives a percentile interval.
    """
    col = {"T": 0, "W": 1}[which]
    eps_grid = list(eps_grid)
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise MetricError("eps grid must be decreasing")
    per_traj = []
    for t in trajectories:
        pts = [(math.log(1 / e), math.log(h[col])) for e, h in zip(eps_grid, hitting_times(t, eps_grid))
               if h[col] is not None and h[col] > 0]
        per_traj.append(pts)
    pooled = [p for pts in per_traj for p in pts]
    xs = np.array([p[0] for p in pooled])
    if len(set(xs.tolist())) < 2:
        raise MetricError("fewer than two distinct eps values reached")
    slope, icpt = _fit(xs, np.array([p[1] for p in pooled]))
    used = sorted({round(math.exp(-x), 12) for x in xs}, reverse=True)
    ci = None
    if len(per_traj) > 1:
        rng = np.random.default_rng(seed)
        boots = []
        for _ in range(n_boot):
            pick = rng.integers(0, len(per_traj), len(per_traj))
            pts = [p for i in pick for p in per_traj[i]]
            bx = np.array([p[0] for p in pts])
            if len(set(bx.tolist())) >= 2:
                boots.append(_fit(bx, np.array([p[1] for p in pts]))[0])
        if boots:
            a = (1 - level) / 2
            ci = (float(np.quantile(boots, a)), float(np.quantile(boots, 1 - a)))
    return SlopeEstimate(slope, icpt, ci, len(pooled), used)
