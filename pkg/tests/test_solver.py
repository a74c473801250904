import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from regastro.estimation import Budget
from regastro.harness.monitors import budget_consistent, replay_decisions, stopping_violations
from regastro.problems import NoisyQuadratic, Rosenbrock
from regastro.solver import (
    ALG2CRN,
    ConfigError,
    InfeasibleBudget,
    IterationRecord,
    RegAstro,
    SolverConfig,
    SolverState,
    epsilon_schedule,
    initialize,
    lambda_schedule,
    run,
    success_decision,
    trust_radius,
    update_parameters,
)

CFG = SolverConfig()


def test_lambda_schedule():
    assert lambda_schedule(0) == pytest.approx(math.log(3) ** 1.1)
    assert lambda_schedule(0) == pytest.approx(1.10899, abs=1e-5)
    vals = np.array([lambda_schedule(k) for k in range(0, 100_001, 7)])
    assert np.all(np.diff(vals) > 0)
    ratios = [lambda_schedule(2 * k) / lambda_schedule(k) for k in (10**2, 10**4, 10**6, 10**8)]
    assert all(a > b for a, b in zip(ratios, ratios[1:])) and ratios[-1] < 1.05


def test_epsilon_schedule():
    assert epsilon_schedule(0) == 1.0
    assert epsilon_schedule(7) == pytest.approx(0.25)
    for k in range(50):
        assert epsilon_schedule(k, 3.0) * (k + 1) ** (2 / 3) == pytest.approx(3.0)


def test_trust_radius_examples():
    assert trust_radius(16.0, 1.0) == pytest.approx(1.0)
    assert trust_radius(1.0, 1.0) == pytest.approx(0.25)


@given(st.floats(0, 1e6), st.floats(1e-3, 1e4))
def test_trust_radius_round_trip(g, lam):
    d = trust_radius(g, lam)
    assert 16 * lam * d * d == pytest.approx(g, rel=1e-12, abs=1e-300)


def test_success_decision_examples():
    assert success_decision(0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.1, CFG) == "D"
    assert success_decision(0.1, 1.0, 1.0, 1.0, 0.3, 100.0, 2.0, CFG) == "G"
    assert success_decision(0.1, 1.0, 1.0, 1.0, 0.9, 100.0, 2.0, CFG) == "U"
    # short step: D refused, G blocked by the schedule floor
    assert success_decision(0.9, 0.1, 1.0, 1.0, 0.3, 1.5, 2.0, CFG) == "U"
    assert success_decision(math.nan, 1.0, 1.0, 1.0, 1.0, 1.0, 1.1, CFG) == "U"
    crn = SolverConfig(mode=ALG2CRN)
    assert success_decision(0.9, 0.01, 1.0, 1.0, 1.0, 1.0, 1.1, crn) == "D"
    assert success_decision(0.1, 1.0, 1.0, 1.0, 0.3, 100.0, 2.0, crn) == "U"


def _state(lam):
    return SolverState(np.zeros(2), lam, 0.5, np.array([1.0, 0.0]))


def test_update_parameters_examples():
    cfg = SolverConfig(lambda_min=1.0)
    gs = np.array([0.6, 0.8])
    up = update_parameters(_state(4.0), "D", np.ones(2), np.array([3.0, 4.0]), gs, cfg)
    assert up.lambda_k == 2.0 and np.array_equal(up.x, np.ones(2)) and np.array_equal(up.g_pre, gs)
    assert up.delta_pre == pytest.approx(trust_radius(1.0, 2.0))
    assert update_parameters(_state(1.5), "G", np.ones(2), gs, gs, cfg).lambda_k == 1.0
    down = update_parameters(_state(3.0), "U", np.ones(2), np.array([3.0, 4.0]), gs, cfg)
    assert down.lambda_k == 6.0 and np.array_equal(down.x, np.zeros(2))
    assert np.array_equal(down.g_pre, [3.0, 4.0]) and down.k == 1


def test_delta_pre_capped():
    cfg = SolverConfig(delta_max_pre=2.0)
    up = update_parameters(_state(0.2), "D", np.ones(2), np.ones(2), np.array([1e6, 0.0]), cfg)
    assert up.delta_pre == 2.0


def test_initialize_examples():
    orc = NoisyQuadratic.diagonal([1.0, 1.0], 0.0)
    st0 = initialize([32.0, 0.0], orc, SolverConfig(lambda_min=1.0), seed=0)
    assert st0.oracle_calls_main == 2
    assert st0.lambda_k == pytest.approx(2.0)
    assert initialize([0.0, 0.0], orc, SolverConfig(lambda_min=1.0), seed=0).lambda_k == 1.0


def test_budget_below_initial_sample_is_rejected():
    orc = NoisyQuadratic.diagonal([1.0], 1.0)
    with pytest.raises(InfeasibleBudget):
        run([1.0], orc, SolverConfig(delta0_pre=0.5), seed=0, budget=10)


def test_zero_budget_gives_empty_trajectory():
    res = run([1.0, 1.0], Rosenbrock(2), CFG, seed=0, budget=0)
    assert res.records == [] and res.total_calls == 0


def test_zero_gradient_start_exits():
    res = run([1.0, 1.0], Rosenbrock(2, 0.0), CFG, seed=0, budget=math.inf)
    assert res.status == "stationary" and res.records == []


def test_noiseless_rosenbrock_from_origin_improves():
    res = run([0.0, 0.0], Rosenbrock(2, 0.0), SolverConfig(max_iter=20), seed=0, budget=math.inf)
    assert res.records[-1].truth_f < res.truth_f0 == 1.0


@pytest.mark.xfail(strict=True, reason="interior steps fail the step-length floor near the optimum, so the "
                                       "regularization settles near the schedule floor, not the global floor")
def test_strongly_convex_noiseless_tail_reaches_lambda_min():
    orc = NoisyQuadratic.diagonal([2.0, 4.0], 0.0)
    cfg = SolverConfig(max_iter=60, stop_grad_tol=1e-10, budget_max=math.inf)
    recs = run([3.0, 3.0], orc, cfg, seed=0, budget=math.inf).records
    tail = recs[len(recs) // 2:]
    assert all(r.accept == "D" for r in tail)
    assert tail[-1].lambda_k == cfg.lambda_min


def test_same_seed_same_trajectory():
    a = run([-1.2, 1.0], Rosenbrock(2), SolverConfig(max_iter=8), seed=4)
    b = run([-1.2, 1.0], Rosenbrock(2), SolverConfig(max_iter=8), seed=4)
    c = run([-1.2, 1.0], Rosenbrock(2), SolverConfig(max_iter=8), seed=5)
    assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]
    assert [r.to_dict() for r in a.records] != [r.to_dict() for r in c.records]


@pytest.fixture(scope="module")
def noisy_run():
    s = RegAstro(Rosenbrock(2), SolverConfig(max_iter=25, n_max=20_000), seed=2, trace=True)
    return s, s.run([-1.2, 1.0])


def test_records_replay(noisy_run):
    _, res = noisy_run
    assert budget_consistent(res)
    assert replay_decisions(res.records, SolverConfig()) == []
    for r in res.records:
        assert r.accept in ("D", "G", "U")
        if r.pred_red > 0:
            assert r.rho_k == pytest.approx((r.f_bar - r.f_bar_s) / r.pred_red, rel=1e-12)
        assert r.delta_k == pytest.approx(trust_radius(r.g_bar_norm, r.lambda_k))
        assert r.shift == pytest.approx(math.sqrt(r.lambda_k * r.g_bar_norm))


def test_traced_calls_are_minimal(noisy_run):
    s, res = noisy_run
    # the iteration cut short by the budget leaves a partial tail in the trace
    assert 4 * len(res.records) <= len(s.trace) < 4 * (len(res.records) + 1)
    assert stopping_violations(s.oracle, s.trace) == []


def test_budget_exhaustion_ends_cleanly():
    res = run([-1.2, 1.0], Rosenbrock(2), CFG, seed=1, budget=30_000)
    assert res.status == "budget"
    assert res.records and res.records[-1].budget_cum <= res.total_calls <= 30_000
    assert res.init_calls + sum(r.n_k + r.n_k_s + r.n_hess_total for r in res.records) == res.records[-1].budget_cum


def test_crn_mode_reuses_center_draws_and_caps_hessian():
    cfg = SolverConfig(mode=ALG2CRN, max_iter=15)
    res = run([-1.2, 1.0], Rosenbrock(2), cfg, seed=3)
    for r in res.records:
        assert r.n_k == r.n_k_s
        assert r.center_noise == r.trial_noise and r.center_noise.endswith(":center")
        assert r.step_norm >= 16 * 0.5 / 18 * r.delta_k - 1e-9


def test_crn_trial_estimate_recomputes_from_center_keys():
    from regastro.rng import Role, StreamSpec

    orc = Rosenbrock(2)
    checked = 0
    for seed in range(3):
        s = RegAstro(orc, SolverConfig(mode=ALG2CRN), seed=seed)
        st = s.initialize([-1.2, 1.0])
        for _ in range(30):
            st, rec = s.step(st)
            if rec.accept != "U":
                break
        else:
            continue
        F, _ = orc.sample_block(st.x, StreamSpec(seed, 0, rec.k, Role.CENTER), 0, rec.n_k)
        assert rec.f_bar_s == pytest.approx(F.mean(), rel=1e-12)
        checked += 1
    assert checked > 0


def test_record_columns_in_declared_order():
    cols = IterationRecord.columns()
    head = ["k", "n_k", "n_k_s", "n_hess_total", "delta_k", "lambda_k", "rho_k", "accept", "step_norm",
            "g_bar_norm", "g_bar_s_norm", "f_bar", "f_bar_s", "truth_f", "truth_g_norm", "budget_cum", "truncated"]
    assert cols[:len(head)] == head


@pytest.mark.parametrize("kw", [dict(eta=0.2), dict(theta=1.0), dict(gamma1=0.9), dict(gamma2=1.2),
                                dict(mode="alg3"), dict(lambda_min=0.0), dict(n_min=1), dict(delta0_pre=20.0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SolverConfig(**kw)


def test_budget_object_tracks_usage():
    b = Budget(100)
    b.charge(40)
    assert b.used == 40 and b.remaining == 60
