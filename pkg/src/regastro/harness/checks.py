"""Quick invariant suite behind ``regastro check``."""

from __future__ import annotations

import math

import numpy as np

from ..estimation import EstimatorState
from ..problems import AmbulanceOracle, Rosenbrock, ambulance_simulate, check_integrity
from ..rng import Role, StreamKey, derive_stream, philox4x32
from ..solver import ALG2CRN, RegAstro, SolverConfig
from ..subproblem import solve_exact, verify_kkt
from . import emit
from .monitors import budget_consistent, replay_decisions

_PHILOX_ZERO = (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)


def _philox():
    out = tuple(int(w[()]) for w in philox4x32((0, 0, 0, 0), (0, 0)))
    return out == _PHILOX_ZERO, "known-answer vector"


def _subproblem(rng, n=100):
    bad = 0
    for _ in range(n):
        d = int(rng.integers(2, 9))
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        H = Q @ np.diag(rng.uniform(-5, 5, d)) @ Q.T
        g = rng.standard_normal(d)
        lam = rng.uniform(0.1, 10)
        delta = math.sqrt(np.linalg.norm(g) / (16 * lam))
        shift = math.sqrt(lam * np.linalg.norm(g))
        bad += not verify_kkt(solve_exact(H, g, delta, shift), H, g, delta, shift, 1e-8)
    return bad == 0, f"{bad} KKT failures in {n} instances"


def _welford(rng, n=200):
    bad = 0
    for _ in range(n):
        m, d = int(rng.integers(2, 50)), int(rng.integers(1, 6))
        F, G = rng.standard_normal(m) * 3 + 1, rng.standard_normal((m, d))
        st = EstimatorState(d, 1.0)
        for f, g in zip(F, G):
            st.update(f, g)
        bad += not math.isclose(st.var_f, F.var(ddof=1), rel_tol=1e-10)
    return bad == 0, f"{bad} mismatches in {n} sample sets"


def _solver_run(seed):
    cfg = SolverConfig(max_iter=15)
    s = RegAstro(Rosenbrock(2, 1.0), cfg, seed)
    res = s.run([-1.2, 1.0])
    ok = budget_consistent(res) and not replay_decisions(res.records, cfg)
    return ok, f"{len(res.records)} iterations, budget and decision replay"


def _crn(seed):
    cfg = SolverConfig(mode=ALG2CRN, max_iter=10)
    texts = [emit.jsonl_text(emit.record_rows(RegAstro(Rosenbrock(2, 1.0), cfg, seed).run([-1.2, 1.0]).records))
             for _ in range(2)]
    rows = RegAstro(Rosenbrock(2, 1.0), cfg, seed).run([-1.2, 1.0]).records
    keys_ok = all(r.center_noise == r.trial_noise and r.n_k == r.n_k_s for r in rows)
    return texts[0] == texts[1] and keys_ok, "byte-identical reruns, trial reuses center draws"


def _des(seed, n=20):
    orc = AmbulanceOracle()
    bad = 0
    for i in range(n):
        res = ambulance_simulate([10, 10, 15, 5], orc.cfg, derive_stream(seed, StreamKey(0, 0, Role.EVAL, i)), record=True)
        bad += sum(check_integrity(res).values())
    return bad == 0, f"{bad} violations in {n} replications"


def run_checks(seed: int = 0):
    rng = np.random.default_rng(seed)
    checks = [("philox", _philox), ("subproblem", lambda: _subproblem(rng)), ("welford", lambda: _welford(rng)),
              ("solver", lambda: _solver_run(seed)), ("crn", lambda: _crn(seed)), ("des", lambda: _des(seed))]
    out = []
    for name, fn in checks:
        ok, detail = fn()
        out.append((name, bool(ok), detail))
    return out
