"""Run-level diagnostics: budget accounting, acceptance replay, stopping
minimality, Lambda bounds, eventual monotonicity and sampling order."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..estimation import SamplingParams, adaptive_estimate_point, delta_tilde
from ..rng import Role, StreamSpec
from ..solver import SolverConfig, success_decision


def budget_consistent(run) -> bool:
    """Initial calls plus per-iteration counts reproduce every ``budget_cum``."""
    total = run.init_calls
    for r in run.records:
        total += r.n_k + r.n_k_s + r.n_hess_total
        if total != r.budget_cum:
            return False
    return True


def replay_decisions(records, cfg: SolverConfig) -> list[int]:
    """Iterations whose recorded class differs from a recomputation from the record alone."""
    bad = []
    for r in records:
        rho = r.rho_k if r.rho_k is not None else math.nan
        d = success_decision(rho, r.step_norm, r.delta_k, r.g_bar_norm, r.g_bar_s_norm,
                             r.lambda_k, r.lambda_sched, cfg)
        if d != r.accept:
            bad.append(r.k)
    return bad


def _sigma_mx(F, G, sigma0):
    sf = float(np.std(F, ddof=1))
    sg = math.sqrt(float(np.sum(np.var(G, axis=0, ddof=1))))
    return max(sf, sg, sigma0)


def _rule_holds(F, G, m, entry):
    p: SamplingParams = entry["params"]
    Fm, Gm = F[:m], G[:m]
    lhs = _sigma_mx(Fm, Gm, p.sigma0) / math.sqrt(m)
    if entry["kind"] == "center":
        gn = float(np.linalg.norm(Gm.mean(axis=0)))
        radius = delta_tilde(gn, entry["lambda_cap"], entry["delta_pre"], entry["c_g"], entry["eps_k"])
    else:
        radius = entry["delta_k"]
    return lhs <= float(p.rhs(radius))


def stopping_violations(oracle, trace) -> list[int]:
    """Indices of traced calls whose n is not the first sample size meeting the rule.

    Statistics are recomputed with plain two-pass formulas.  A call at n
    must satisfy the rule at n (unless truncated) and violate it at n - 1
    (unless n is the minimum).
    """
    bad = []
    for idx, e in enumerate(trace):
        n, p = e["n"], e["params"]
        F, G = oracle.sample_block(np.asarray(e["x"]), e["spec"], 0, n)
        ok = True
        if not e["truncated"]:
            ok &= _rule_holds(F, G, n, e)
        if n > p.n_min:
            ok &= not _rule_holds(F, G, n - 1, e)
        if not ok:
            bad.append(idx)
    return bad


def monotonicity_fraction(run, tail: float = 0.25) -> tuple[float, int]:
    """Share of accepted steps in the final ``tail`` of iterations that raised the true objective."""
    recs = run.records
    prev = run.truth_f0
    flags = []
    start = int(math.floor(len(recs) * (1 - tail)))
    for i, r in enumerate(recs):
        if r.accept != "U":
            if i >= start:
                flags.append(r.truth_f > prev)
            prev = r.truth_f
    return (float(np.mean(flags)) if flags else 0.0), len(flags)


@dataclass
class LambdaBound:
    lambda_hat: float
    fraction: float
    n_checked: int


def lambda_bound_fraction(records, gamma1: float = 2.0, mu: float = 1.0) -> LambdaBound:
    """Check Lambda_k <= gamma1 * max(L_hat, mu |G_k|, lambda_k) on the second half.

    ``L_hat`` is the median Lambda over successful iterations in the first half.
    """
    half = len(records) // 2
    first, second = records[:half], records[half:]
    succ = [r.lambda_k for r in first if r.accept != "U"]
    lam_hat = float(np.median(succ)) if succ else float(np.median([r.lambda_k for r in first] or [math.inf]))
    ok = [r.lambda_k <= gamma1 * max(lam_hat, mu * r.g_bar_norm, r.lambda_sched) for r in second]
    return LambdaBound(lam_hat, float(np.mean(ok)) if ok else 1.0, len(ok))


def hessian_bound_fraction(records) -> float:
    """Share of iterations whose raw FD Hessian norm respected |g| / (tau delta)."""
    vals = [r.hess_norm <= r.hess_bound for r in records if r.hess_norm is not None]
    return float(np.mean(vals)) if vals else 1.0


def sample_size_order(oracle, x, deltas, power: int, reps: int = 50, kappa_a: float = 1.0,
                      lambda_k: float = 1.0, sigma0: float = 1.0, seed: int = 0,
                      n_max: int = 10**7) -> tuple[float, np.ndarray]:
    """Fitted slope of log mean N against log(1/delta) for the known-radius rule."""
    params = SamplingParams(kappa_a, lambda_k, power, 2, n_max, sigma0)
    means = []
    for j, d in enumerate(deltas):
        ns = [adaptive_estimate_point(oracle, x, d, params, StreamSpec(seed, r, j, Role.EVAL)).n
              for r in range(reps)]
        means.append(np.mean(ns))
    xs = np.log(1.0 / np.asarray(deltas, dtype=float))
    slope = float(np.polyfit(xs, np.log(means), 1)[0])
    return slope, np.asarray(means)
