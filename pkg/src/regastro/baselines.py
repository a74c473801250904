"""Comparison solvers sharing the oracle, stream and budget conventions of the main solver.

* Classic adaptive-sampling trust region: sample size from the quadratic
  rule ``sigma_mx / sqrt(n) <= kappa_a / sqrt(lambda_k) * delta**2``, an
  unshifted quadratic model with FD Hessian, acceptance on
  ``rho > eta1`` and ``|g| >= mu_crit * delta``, geometric radius updates.
* ADAM with a fixed minibatch per step.

Both emit ``IterationRecord`` rows so trajectories are interchangeable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .estimation import (
    QUADRATIC,
    Budget,
    BudgetExhausted,
    SamplingParams,
    adaptive_estimate_point,
    fixed_estimate,
)
from .model import build_fd_hessian
from .rng import Role, StreamSpec
from .solver import ConfigError, IterationRecord, RunResult, lambda_schedule
from .subproblem import solve_exact


@dataclass(frozen=True)
class AstroClassicConfig:
    delta0: float = 1.0
    delta_max: float = 10.0
    eta1: float = 0.5
    gamma_inc: float = 2.0
    gamma_dec: float = 0.5
    mu_crit: float = 1.0
    kappa_a: float = 1.0
    eps_lambda: float = 0.1
    kappa_lambda: float = 1.0
    sigma0: float = 1.0
    n_min: int = 2
    n_max: int = 10**7
    budget_max: float = 10**6
    max_iter: int | None = None

    def __post_init__(self):
        if not self.gamma_inc > 1 > self.gamma_dec > 0:
            raise ConfigError("need gamma_inc > 1 > gamma_dec > 0")
        if not 0 < self.delta0 <= self.delta_max:
            raise ConfigError("need 0 < delta0 <= delta_max")
        if not 0 < self.eta1 < 1:
            raise ConfigError("eta1 must lie in (0, 1)")
        if self.mu_crit <= 0 or self.kappa_a <= 0 or self.sigma0 <= 0:
            raise ConfigError("mu_crit, kappa_a and sigma0 must be positive")
        if not 2 <= self.n_min <= self.n_max:
            raise ConfigError("need 2 <= n_min <= n_max")


@dataclass
class AstroClassicState:
    x: np.ndarray
    delta: float
    k: int = 0


def astro_radius_update(delta: float, success: bool, cfg: AstroClassicConfig) -> float:
    if success:
        return min(cfg.gamma_inc * delta, cfg.delta_max)
    return cfg.gamma_dec * delta


def astro_classic_step(state: AstroClassicState, oracle, cfg: AstroClassicConfig, seed: int = 0,
                       run_id: int = 0, budget: Budget | None = None):
    k, x, delta = state.k, state.x, state.delta
    lam = lambda_schedule(k, cfg.eps_lambda, cfg.kappa_lambda)
    params = SamplingParams(cfg.kappa_a, lam, QUADRATIC, cfg.n_min, cfg.n_max, cfg.sigma0)
    center_spec = StreamSpec(seed, run_id, k, Role.CENTER)
    center = adaptive_estimate_point(oracle, x, delta, params, center_spec, budget)
    hres = build_fd_hessian(oracle, x, delta, center.g_bar, params, seed, run_id, k, None, budget)
    sol = solve_exact(hres.hess, center.g_bar, delta, 0.0)
    x_trial = x + sol.s
    trial_spec = StreamSpec(seed, run_id, k, Role.TRIAL)
    trial = adaptive_estimate_point(oracle, x_trial, delta, params, trial_spec, budget)

    pred = sol.pred_red
    rho = (center.f_bar - trial.f_bar) / pred if pred > 0 else math.nan
    gn = center.g_norm
    success = bool(rho > cfg.eta1 and gn >= cfg.mu_crit * delta)
    new = replace(state, x=x_trial if success else x, delta=astro_radius_update(delta, success, cfg), k=k + 1)

    truth = oracle.truth(new.x)
    rec = IterationRecord(
        k=k, n_k=center.n, n_k_s=trial.n, n_hess_total=int(sum(hres.counts)), delta_k=delta,
        lambda_k=math.nan, rho_k=rho, accept="D" if success else "U", step_norm=sol.step_norm,
        g_bar_norm=gn, g_bar_s_norm=trial.g_norm, f_bar=center.f_bar, f_bar_s=trial.f_bar,
        truth_f=None if truth is None else float(truth[0]),
        truth_g_norm=None if truth is None else float(np.linalg.norm(truth[1])),
        budget_cum=int(budget.used) if budget is not None else 0,
        truncated=bool(center.truncated or trial.truncated or hres.truncated),
        pred_red=pred, lambda_sched=lam, shift=0.0, ell=sol.ell, on_boundary=sol.on_boundary,
        sigma_mx=center.sigma_mx, center_noise=center_spec.label(), trial_noise=trial_spec.label(),
    )
    return new, rec


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    batch: int = 32
    budget_max: float = 10**6
    max_iter: int | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.eps_hat <= 0:
            raise ConfigError("lr and eps_hat must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if self.batch < 1:
            raise ConfigError("batch must be at least 1")


@dataclass
class AdamState:
    x: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def start(cls, x0) -> "AdamState":
        x0 = np.asarray(x0, dtype=float).copy()
        return cls(x0, np.zeros_like(x0), np.zeros_like(x0), 0)


def adam_step(state: AdamState, g_batch_mean, cfg: AdamConfig) -> AdamState:
    g = np.asarray(g_batch_mean, dtype=float)
    t = state.t + 1
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * g * g
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    x = state.x - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps_hat)
    return AdamState(x, m, v, t)


def _initial_result(oracle, x0) -> RunResult:
    x0 = np.asarray(x0, dtype=float).copy()
    res = RunResult([], x0, x0.copy(), status="budget", path=[(0, x0.copy())])
    truth0 = oracle.truth(x0)
    if truth0 is not None:
        res.truth_f0, res.truth_g0 = float(truth0[0]), float(np.linalg.norm(truth0[1]))
    return res


def run_astro_classic(x0, oracle, cfg: AstroClassicConfig = AstroClassicConfig(), seed: int = 0,
                      budget: float | None = None, run_id: int = 0,
                      stop_grad_tol: float | None = None) -> RunResult:
    b = Budget(cfg.budget_max if budget is None else budget)
    res = _initial_result(oracle, x0)
    state = AstroClassicState(res.x0.copy(), cfg.delta0)
    while b.remaining > 0:
        if cfg.max_iter is not None and state.k >= cfg.max_iter:
            res.status = "max_iter"
            break
        try:
            state, rec = astro_classic_step(state, oracle, cfg, seed, run_id, b)
        except BudgetExhausted:
            break
        res.records.append(rec)
        if rec.accept == "D":
            res.path.append((rec.budget_cum, state.x.copy()))
        if stop_grad_tol is not None and rec.truth_g_norm is not None and rec.truth_g_norm <= stop_grad_tol:
            res.status = "truth_tol"
            break
    res.x_final = state.x.copy()
    res.total_calls = int(b.used)
    return res


def run_adam(x0, oracle, cfg: AdamConfig = AdamConfig(), seed: int = 0, budget: float | None = None,
             run_id: int = 0, stop_grad_tol: float | None = None) -> RunResult:
    """ADAM on minibatch means; each step draws ``batch`` fresh samples."""
    b = Budget(cfg.budget_max if budget is None else budget)
    res = _initial_result(oracle, x0)
    state = AdamState.start(res.x0)
    while True:
        if cfg.max_iter is not None and state.t >= cfg.max_iter:
            res.status = "max_iter"
            break
        if b.remaining < cfg.batch:
            break
        spec = StreamSpec(seed, run_id, state.t, Role.BASELINE)
        est = fixed_estimate(oracle, state.x, cfg.batch, spec, 1.0, b)
        new = adam_step(state, est.g_bar, cfg)
        truth = oracle.truth(new.x)
        res.records.append(IterationRecord(
            k=state.t, n_k=cfg.batch, n_k_s=0, n_hess_total=0, delta_k=math.nan, lambda_k=math.nan,
            rho_k=None, accept="D", step_norm=float(np.linalg.norm(new.x - state.x)),
            g_bar_norm=est.g_norm, g_bar_s_norm=math.nan, f_bar=est.f_bar, f_bar_s=math.nan,
            truth_f=None if truth is None else float(truth[0]),
            truth_g_norm=None if truth is None else float(np.linalg.norm(truth[1])),
            budget_cum=int(b.used), truncated=False, center_noise=spec.label(),
        ))
        state = new
        res.path.append((int(b.used), state.x.copy()))
        if (stop_grad_tol is not None and res.records[-1].truth_g_norm is not None
                and res.records[-1].truth_g_norm <= stop_grad_tol):
            res.status = "truth_tol"
            break
    res.x_final = state.x.copy()
    res.total_calls = int(b.used)
    return res
