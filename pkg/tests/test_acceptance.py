"""Acceptance suite: one reported line per criterion.

Hard criteria assert.  Soft criteria and the long-run monitors emit a
warning and a WARN line instead of failing.
"""

import math
import time
import warnings

import numpy as np
import pytest

from helpers import brute_force_min, random_instance, shifted_value
from regastro.baselines import AdamConfig, AstroClassicConfig, run_adam, run_astro_classic
from regastro.estimation import Budget, EstimatorState
from regastro.harness import emit
from regastro.harness.metrics import complexity_slope
from regastro.harness.monitors import (
    lambda_bound_fraction,
    monotonicity_fraction,
    sample_size_order,
    stopping_violations,
)
from regastro.model import TRModel, cap_hessian, predicted_reduction
from regastro.problems import NoisyQuadratic, Rosenbrock
from regastro.problems.ambulance import (
    AmbulanceSimConfig,
    ambulance_simulate,
    check_integrity,
    draw_calls,
)
from regastro.rng import Role, StreamSpec, derive_stream
from regastro.solver import ALG2CRN, RegAstro, SolverConfig, run
from regastro.subproblem import solve_exact, verify_kkt


def verdict(report, number, ok, detail, soft=False):
    if ok:
        report(number, "PASS", detail)
        return
    if soft:
        report(number, "WARN", detail)
        warnings.warn(f"criterion {number} not met: {detail}")
        return
    report(number, "FAIL", detail)
    pytest.fail(f"criterion {number}: {detail}")


# subproblem ------------------------------------------------------------------

@pytest.fixture(scope="module")
def solved_instances():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    out = []
    for i in range(500):
        H, g, delta, shift, lam = random_instance(rng, hard=(i % 4 == 0))
        sol = solve_exact(H, g, delta, shift)
        best, _ = brute_force_min(H, g, delta, shift, rng, n_sphere=500)
        out.append((H, g, delta, shift, lam, sol, best))
    return out, time.perf_counter() - t0


def test_subproblem_exactness(solved_instances, acceptance_report):
    inst, secs = solved_instances
    kkt_bad = sum(not verify_kkt(sol, H, g, d, sh, tol=1e-8) for H, g, d, sh, _, sol, _ in inst)
    val_bad = sum(abs(shifted_value(H, g, sh, sol.s) - best) > 1e-6 * max(1.0, abs(best))
                  for H, g, d, sh, _, sol, best in inst)
    hard = sum(sol.hard_case for *_, sol, _ in inst)
    verdict(acceptance_report, 1, kkt_bad == 0 and val_bad == 0 and secs < 30,
            f"500 instances ({hard} hard case), KKT failures {kkt_bad}, value mismatches {val_bad}, {secs:.1f}s")


def test_reduction_bound(solved_instances, acceptance_report):
    inst, _ = solved_instances
    bad = 0
    for H, g, delta, shift, lam, sol, _ in inst:
        pred = predicted_reduction(TRModel(0.0, g, H, delta, lam), sol.s)
        sn2 = float(sol.s @ sol.s)
        bad += pred < 0.5 * (shift + sol.ell) * sn2 - 1e-9
        bad += pred < 2 * lam * delta * sn2 - 1e-9
    verdict(acceptance_report, 2, bad == 0, f"500 instances, violations {bad}")


def test_step_floor_with_capped_hessian(acceptance_report):
    rng = np.random.default_rng(7)
    tau, bad, capped = 0.5, 0, 0
    for _ in range(200):
        H, g, delta, shift, _ = random_instance(rng)
        H *= 10 ** rng.uniform(0, 3)
        Hc, was = cap_hessian(H, float(np.linalg.norm(g)), delta, tau)
        capped += was
        s = solve_exact(Hc, g, delta, shift).s
        bad += np.linalg.norm(s) < 16 * tau / (16 + 4 * tau) * delta - 1e-9
    verdict(acceptance_report, 3, bad == 0, f"200 instances ({capped} capped), violations {bad}")


# estimation ------------------------------------------------------------------

def test_sampling_order(acceptance_report):
    orc = NoisyQuadratic.diagonal([1.0], 1.0)
    t0 = time.perf_counter()
    deltas = (0.4, 0.2, 0.1)
    cubic, _ = sample_size_order(orc, np.zeros(1), deltas, 3, reps=50, seed=1)
    quad, _ = sample_size_order(orc, np.zeros(1), deltas, 2, reps=50, seed=2)
    secs = time.perf_counter() - t0
    verdict(acceptance_report, 4, abs(cubic - 6) <= 1 and abs(quad - 4) <= 1 and secs < 120,
            f"slopes cubic {cubic:.2f}, quadratic {quad:.2f}, {secs:.1f}s")


def test_estimator_correctness(acceptance_report):
    rng = np.random.default_rng(5)
    welford_bad = 0
    for _ in range(1000):
        n, d = int(rng.integers(2, 200)), int(rng.integers(1, 6))
        F = rng.normal(rng.uniform(-1e3, 1e3), rng.uniform(1e-2, 1e2), n)
        G = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
        s = EstimatorState(d)
        for f, g in zip(F, G):
            s.update(f, g)
        ok = (math.isclose(s.mean_f, F.mean(), rel_tol=1e-10, abs_tol=1e-12)
              and math.isclose(s.var_f, F.var(ddof=1), rel_tol=1e-10)
              and np.allclose(s.m2_g / (n - 1), G.var(axis=0, ddof=1), rtol=1e-10, atol=0))
        welford_bad += not ok
    solver = RegAstro(Rosenbrock(2), SolverConfig(max_iter=100, n_max=10_000, budget_max=math.inf),
                      seed=0, budget=Budget(math.inf), trace=True)
    res = solver.run([-1.2, 1.0])
    stop_bad = stopping_violations(solver.oracle, solver.trace)
    open_calls = sum(not e["truncated"] for e in solver.trace)
    verdict(acceptance_report, 5, welford_bad == 0 and not stop_bad and len(res.records) == 100,
            f"Welford mismatches {welford_bad}/1000, stopping violations {len(stop_bad)}/{len(solver.trace)} "
            f"calls ({open_calls} not truncated) over {len(res.records)} iterations")


# solver ----------------------------------------------------------------------

class RecordingOracle:
    """Pass-through oracle that logs every block request."""

    def __init__(self, inner):
        self.inner, self.dim, self.calls = inner, inner.dim, []

    def sample_block(self, x, spec, start, count):
        self.calls.append((np.array(x), spec, start, count))
        return self.inner.sample_block(x, spec, start, count)

    def __getattr__(self, name):
        return getattr(self.inner, name)


def test_crn_reproducibility(acceptance_report):
    cfg = SolverConfig(mode=ALG2CRN, max_iter=40)
    texts = []
    for _ in range(2):
        orc = RecordingOracle(Rosenbrock(2))
        res = run([-1.2, 1.0], orc, cfg, seed=13)
        texts.append(emit.jsonl_text(emit.record_rows(res.records)).encode())
    mismatches = int(texts[0] != texts[1])
    by_k = {r.k: r for r in res.records}
    # large samples arrive in chunks; a trial drawn in the iteration the budget cut short has no record
    trials: dict[int, list] = {}
    for x, spec, start, count in orc.calls:
        if spec.role == Role.TRIAL and spec.iteration in by_k:
            trials.setdefault(spec.iteration, []).append((x, spec, start, count))
    for k, chunks in trials.items():
        rec = by_k[k]
        x, spec = chunks[0][0], chunks[0][1]
        covered = [(c[2], c[2] + c[3]) for c in chunks]
        contiguous = covered[0][0] == 0 and covered[-1][1] == rec.n_k and all(
            a[1] == b[0] for a, b in zip(covered, covered[1:]))
        F, _ = orc.inner.sample_block(x, StreamSpec(spec.root_seed, spec.run_id, k, Role.CENTER), 0, rec.n_k)
        mismatches += any(c[1].noise_code != Role.CENTER for c in chunks) or rec.center_noise != rec.trial_noise
        mismatches += not contiguous
        mismatches += not math.isclose(F.mean(), rec.f_bar_s, rel_tol=1e-12, abs_tol=1e-12)
    verdict(acceptance_report, 6, mismatches == 0 and len(trials) == len(res.records),
            f"{len(res.records)} iterations, byte-identical JSONL, trial key mismatches {mismatches}")


def _noiseless_rosenbrock_run():
    cfg = SolverConfig(stop_grad_tol=1e-4, max_iter=500, budget_max=math.inf)
    t0 = time.perf_counter()
    res = run([-1.2, 1.0], Rosenbrock(2, 0.0), cfg, seed=0, budget=math.inf)
    return res, time.perf_counter() - t0


def test_deterministic_sanity(acceptance_report):
    res, secs = _noiseless_rosenbrock_run()
    tail = [r.lambda_k for r in res.records[-10:]]
    ok = res.status == "truth_tol" and res.records[-1].truth_g_norm <= 1e-4 and secs < 10
    acceptance_report(7, "PART" if ok else "FAIL",
                      f"|grad f| {res.records[-1].truth_g_norm:.1e} after {len(res.records)} iterations in "
                      f"{secs:.2f}s; tail Lambda in [{min(tail):.2f}, {max(tail):.2f}] stays above Lambda_min "
                      f"(see xfail test)")
    assert ok


@pytest.mark.xfail(strict=True, reason="near the optimum Newton steps are interior, so only gradient-contraction "
                                       "successes occur and those require Lambda above the schedule floor")
def test_lambda_returns_to_floor():
    res, _ = _noiseless_rosenbrock_run()
    succ = [r for r in res.records[len(res.records) // 2:] if r.accept != "U"]
    assert succ and all(math.isclose(r.lambda_k, SolverConfig().lambda_min) for r in succ[-5:])


def test_comparative_benchmark(acceptance_report):
    oracle, budget, reps = Rosenbrock(5), 200_000, 20
    x0 = np.resize([-1.2, 1.0], 5)
    runners = {
        "reg_astro": lambda s: run(x0, oracle, SolverConfig(), s, budget),
        "reg_astro_crn": lambda s: run(x0, oracle, SolverConfig(mode=ALG2CRN), s, budget),
        "astro_classic": lambda s: run_astro_classic(x0, oracle, AstroClassicConfig(), s, budget),
        "adam": lambda s: run_adam(x0, oracle, AdamConfig(), s, budget),
    }
    t0 = time.perf_counter()
    med = {k: float(np.median([oracle.truth(f(1000 + r).x_final)[0] for r in range(reps)]))
           for k, f in runners.items()}
    secs = time.perf_counter() - t0
    ok = med["reg_astro"] <= med["astro_classic"] and med["reg_astro"] <= med["adam"] and secs < 600
    verdict(acceptance_report, 8, ok, "median final f " + ", ".join(f"{k} {v:.3g}" for k, v in med.items())
            + f" ({secs:.0f}s)", soft=True)


@pytest.fixture(scope="module")
def quadratic_d10_runs():
    orc = NoisyQuadratic.diagonal(np.linspace(1.0, 10.0, 10), 1.0)
    cfg = SolverConfig(max_iter=2000)
    return [run(np.ones(10), orc, cfg, seed=500 + r, budget=2_000_000) for r in range(10)], cfg


def test_eventual_monotonicity(quadratic_d10_runs, acceptance_report):
    runs, _ = quadratic_d10_runs
    fr = [monotonicity_fraction(r) for r in runs]
    good = sum(f <= 0.02 for f, _ in fr)
    iters = [len(r.records) for r in runs]
    verdict(acceptance_report, 9, good >= 9 and min(iters) >= 2000,
            f"{good}/10 reps with <= 2% increases in the last quartile; iterations {min(iters)}-{max(iters)} "
            f"of 2000 within a 2e6-call cap; accepted tail steps checked {sum(n for _, n in fr)}", soft=True)


def test_lambda_bound(quadratic_d10_runs, acceptance_report):
    runs, cfg = quadratic_d10_runs
    fr = [lambda_bound_fraction(r.records, cfg.gamma1, cfg.mu) for r in runs]
    good = sum(b.fraction >= 0.95 for b in fr)
    iters = min(len(r.records) for r in runs)
    verdict(acceptance_report, 10, good == len(runs) and iters >= 2000,
            f"{good}/10 reps with >= 95% of second-half iterations bounded; "
            f"min fraction {min(b.fraction for b in fr):.2f}; shortest run {iters} of 2000 iterations", soft=True)


# ambulance -------------------------------------------------------------------

def test_ipa_validity(acceptance_report):
    cfg = AmbulanceSimConfig()
    x, h = np.array([10.0, 10.0, 15.0, 5.0]), 1e-4
    t0 = time.perf_counter()
    ipa, fd = np.zeros(4), np.zeros(4)
    for r in range(200):
        calls = draw_calls(derive_stream(11, StreamSpec(11, 0, 0, Role.EVAL).key(r)), cfg)
        ipa += ambulance_simulate(x, cfg, calls=calls).grad
        for j in range(4):
            e = np.eye(4)[j] * h
            up = ambulance_simulate(x + e, cfg, calls=calls).avg_response
            dn = ambulance_simulate(x - e, cfg, calls=calls).avg_response
            fd[j] += (up - dn) / (2 * h)
    ipa, fd = ipa / 200, fd / 200
    err = float(np.mean(np.abs(ipa - fd) / np.abs(fd)))
    secs = time.perf_counter() - t0
    verdict(acceptance_report, 11, err <= 0.05 and secs < 120, f"mean relative error {err:.2e}, {secs:.1f}s")


def test_des_integrity(acceptance_report):
    cfg = AmbulanceSimConfig()
    rng = np.random.default_rng(12)
    totals = dict.fromkeys(("time_order", "fifo", "conservation", "travel_bound"), 0)
    queued = 0
    for r in range(100):
        x = rng.uniform(0, cfg.region, 4)
        res = ambulance_simulate(x, cfg, derive_stream(12, StreamSpec(12, 0, 0, Role.EVAL).key(r)), record=True)
        queued += len(res.log.enqueued)
        for k, v in check_integrity(res).items():
            totals[k] += v
    verdict(acceptance_report, 12, sum(totals.values()) == 0,
            f"100 replications ({queued} queued calls), violations {totals}")


# complexity ------------------------------------------------------------------

def test_complexity_slope(acceptance_report):
    orc = NoisyQuadratic.diagonal(np.linspace(1.0, 10.0, 5), 1.0)
    eps = [0.5, 0.25, 0.125, 0.0625]
    cfg = SolverConfig(stop_grad_tol=eps[-1])
    runs = [run(np.ones(5), orc, cfg, seed=1300 + r, budget=10_000_000) for r in range(10)]
    est = complexity_slope(runs, eps, "T", n_boot=1000, seed=13)
    lo, hi = est.ci
    verdict(acceptance_report, 13, 1.0 <= est.slope <= 2.5,
            f"T slope {est.slope:.2f}, 90% bootstrap CI [{lo:.2f}, {hi:.2f}], {est.n_points} points", soft=True)
