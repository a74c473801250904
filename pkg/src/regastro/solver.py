"""Adaptively regularized stochastic trust region with adaptive sampling.

Two modes share one loop:

* ``alg1``: exact regularized subproblem, cubic-power sampling at the
  center (radius proxy) and at the trial point, acceptance by either
  sufficient decrease with a step-length floor (class D) or estimated
  gradient contraction with a regularization floor (class G).
* ``alg2crn``: quadratic-power sampling, the trial point re-uses the
  center's N_k draws (common random numbers), the model Hessian is capped
  at |g| / (tau * delta), and only the ratio test decides.

The regularization parameter Lambda_k sets both the radius
delta_k = sqrt(|g| / (16 Lambda_k)) and the shift sqrt(Lambda_k |g|) added to
the model Hessian in the subproblem.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .estimation import (
    CUBIC,
    QUADRATIC,
    Budget,
    BudgetExhausted,
    SamplingParams,
    adaptive_estimate_center,
    adaptive_estimate_point,
    fixed_estimate,
    initial_sample_size,
)
from .model import TRModel, build_fd_hessian, cap_hessian, hessian_bound, spectral_norm
from .rng import Role, StreamSpec
from .subproblem import solve_exact

log = logging.getLogger(__name__)

ALG1 = "alg1"
ALG2CRN = "alg2crn"


class ConfigError(ValueError):
    pass


class InfeasibleBudget(ConfigError):
    """The budget cannot cover the initial sample."""


class StationaryPoint(Exception):
    """The center gradient estimate is exactly zero."""


@dataclass(frozen=True)
class SolverConfig:
    delta0_pre: float = 1.0
    delta_max_pre: float = 10.0
    sigma0: float = 1.0
    lambda_min: float = 0.1
    eta: float = 0.5
    mu: float = 1.0
    theta: float = 0.5
    gamma1: float = 2.0
    gamma2: float = 0.5
    kappa_a: float = 1.0
    c_g: float = 0.1
    eps_lambda: float = 0.1
    kappa_lambda: float = 1.0
    c_star: float = 1.0
    shift_multiplier: float = 1.0
    mode: str = ALG1
    tau_cap: float = 0.5
    budget_max: float = 10**6
    n_min: int = 2
    n_max: int = 10**7
    stop_grad_tol: float | None = None
    max_iter: int | None = None

    def __post_init__(self):
        checks = [
            (0.25 < self.eta < 1, "eta must lie in (1/4, 1)"),
            (self.mu > 0, "mu must be positive"),
            (0 < self.theta < 1, "theta must lie in (0, 1)"),
            (self.gamma1 > 1 > self.gamma2 > 0, "need gamma1 > 1 > gamma2 > 0"),
            (self.lambda_min > 0, "lambda_min must be positive"),
            (0 < self.delta0_pre <= self.delta_max_pre, "need 0 < delta0_pre <= delta_max_pre"),
            (self.sigma0 > 0, "sigma0 must be positive"),
            (self.kappa_a > 0 and self.c_g > 0, "kappa_a and c_g must be positive"),
            (self.eps_lambda > 0 and self.c_star > 0, "eps_lambda and c_star must be positive"),
            (self.kappa_lambda >= 1, "kappa_lambda >= 1 keeps lambda_k > 1"),
            (self.shift_multiplier >= 0, "shift_multiplier must be non-negative"),
            (self.mode in (ALG1, ALG2CRN), f"mode must be {ALG1!r} or {ALG2CRN!r}"),
            (0 < self.tau_cap <= 1, "tau_cap must lie in (0, 1]"),
            (2 <= self.n_min <= self.n_max, "need 2 <= n_min <= n_max"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def power(self) -> int:
        return CUBIC if self.mode == ALG1 else QUADRATIC

    @property
    def crn(self) -> bool:
        return self.mode == ALG2CRN


@dataclass
class SolverState:
    x: np.ndarray
    lambda_k: float
    delta_pre: float
    g_pre: np.ndarray
    k: int = 0
    oracle_calls_main: int = 0
    oracle_calls_hess: int = 0


@dataclass
class IterationRecord:
    k: int
    n_k: int
    n_k_s: int
    n_hess_total: int
    delta_k: float
    lambda_k: float
    rho_k: float | None
    accept: str
    step_norm: float
    g_bar_norm: float
    g_bar_s_norm: float
    f_bar: float
    f_bar_s: float
    truth_f: float | None
    truth_g_norm: float | None
    budget_cum: int
    truncated: bool
    # diagnostics beyond the core columns
    pred_red: float | None = None
    lambda_sched: float | None = None
    eps_k: float | None = None
    shift: float | None = None
    ell: float | None = None
    on_boundary: bool | None = None
    hess_norm: float | None = None
    hess_bound: float | None = None
    hess_capped: bool | None = None
    sigma_mx: float | None = None
    center_noise: str | None = None
    trial_noise: str | None = None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, float) and not math.isfinite(val):
                out[key] = None
        return out


@dataclass
class RunResult:
    records: list[IterationRecord]
    x0: np.ndarray
    x_final: np.ndarray
    init_calls: int = 0
    total_calls: int = 0
    status: str = "budget"
    truth_f0: float | None = None
    truth_g0: float | None = None
    path: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def incumbent_at(self, budget: float) -> np.ndarray:
        """Incumbent in effect once ``budget`` oracle calls have been spent."""
        x = self.x0
        for b, xb in self.path:
            if b > budget:
                break
            x = xb
        return x


def lambda_schedule(k: int, eps_lambda: float = 0.1, kappa_lambda: float = 1.0) -> float:
    """Slowly growing sample-size inflation kappa * log(k + 3) ** (1 + eps)."""
    return kappa_lambda * math.log(k + 3) ** (1.0 + eps_lambda)


def epsilon_schedule(k: int, c_star: float = 1.0) -> float:
    return c_star * (k + 1) ** (-2.0 / 3.0)


def trust_radius(g_bar_norm: float, lambda_k: float) -> float:
    if lambda_k <= 0:
        raise ValueError("lambda_k must be positive")
    return math.sqrt(g_bar_norm / (16.0 * lambda_k))


def success_decision(rho, step_norm, delta, g_bar_norm, g_bar_s_norm, lambda_k, lambda_sched,
                     cfg: SolverConfig) -> str:
    """Classify an iteration as 'D' (decrease), 'G' (gradient contraction) or 'U'."""
    rho_ok = rho is not None and math.isfinite(rho) and rho > cfg.eta
    if cfg.mode == ALG2CRN:
        return "D" if rho_ok else "U"
    if rho_ok and step_norm >= cfg.theta * delta:
        return "D"
    if g_bar_s_norm <= cfg.eta * g_bar_norm and lambda_k > max(cfg.mu * g_bar_norm, lambda_sched):
        return "G"
    return "U"


def update_parameters(state: SolverState, decision: str, x_trial, g_bar, g_bar_s,
                      cfg: SolverConfig) -> SolverState:
    if decision in ("D", "G"):
        x = np.asarray(x_trial, dtype=float)
        lam = max(cfg.gamma2 * state.lambda_k, cfg.lambda_min)
        g_pre = np.asarray(g_bar_s, dtype=float)
    else:
        x = state.x
        lam = cfg.gamma1 * state.lambda_k
        g_pre = np.asarray(g_bar, dtype=float)
    delta_pre = min(trust_radius(float(np.linalg.norm(g_pre)), lam), cfg.delta_max_pre)
    return replace(state, x=x, lambda_k=lam, g_pre=g_pre, delta_pre=delta_pre, k=state.k + 1)


class RegAstro:
    """One macro-replication of the solver on one oracle.

    ``trace=True`` keeps every adaptive sampling call (point, stream, rule
    constants, chosen n) so the stopping decisions can be replayed.
    """

    def __init__(self, oracle, cfg: SolverConfig = SolverConfig(), seed: int = 0,
                 run_id: int = 0, budget: Budget | None = None, trace: bool = False):
        self.oracle = oracle
        self.cfg = cfg
        self.seed = int(seed)
        self.run_id = int(run_id)
        self.budget = budget if budget is not None else Budget(cfg.budget_max)
        self.trace: list[dict] | None = [] if trace else None

    def _spec(self, k, role, noise_role=None):
        return StreamSpec(self.seed, self.run_id, k, role, noise_role)

    def initialize(self, x0) -> SolverState:
        cfg = self.cfg
        x0 = np.asarray(x0, dtype=float).copy()
        n0 = initial_sample_size(cfg.sigma0, cfg.kappa_a, cfg.delta0_pre, cfg.n_min, cfg.n_max)
        if self.budget.remaining < n0:
            raise InfeasibleBudget(f"budget {self.budget.remaining} is below the initial sample size {n0}")
        est = fixed_estimate(self.oracle, x0, n0, self._spec(0, Role.INIT), cfg.sigma0, self.budget)
        lam0 = max(cfg.lambda_min, est.g_norm / (16.0 * cfg.delta0_pre ** 2))
        return SolverState(x0, lam0, cfg.delta0_pre, est.g_bar, 0, n0, 0)

    def step(self, state: SolverState) -> tuple[SolverState, IterationRecord]:
        cfg, oracle, budget = self.cfg, self.oracle, self.budget
        k = state.k
        lam_sched = lambda_schedule(k, cfg.eps_lambda, cfg.kappa_lambda)
        eps_k = epsilon_schedule(k, cfg.c_star)
        params = SamplingParams(cfg.kappa_a, lam_sched, cfg.power, cfg.n_min, cfg.n_max, cfg.sigma0)
        used0 = budget.used

        center_spec = self._spec(k, Role.CENTER)
        center = adaptive_estimate_center(oracle, state.x, params, state.lambda_k, state.delta_pre,
                                          cfg.c_g, eps_k, center_spec, budget)
        self._log_call("center", state.x, center, params, lambda_cap=state.lambda_k,
                       delta_pre=state.delta_pre, c_g=cfg.c_g, eps_k=eps_k)
        gn = center.g_norm
        if gn == 0.0:
            raise StationaryPoint(f"zero gradient estimate at iteration {k}")
        delta = trust_radius(gn, state.lambda_k)

        hess_noise = Role.CENTER if cfg.crn else None
        hres = build_fd_hessian(oracle, state.x, delta, center.g_bar, params, self.seed,
                                self.run_id, k, hess_noise, budget)
        if self.trace is not None:
            for j, n in enumerate(hres.counts):
                xj = state.x.copy()
                xj[j] += delta
                self.trace.append(dict(kind="point", x=xj, spec=self._spec(k, Role.hess(j), hess_noise),
                                       params=params, delta_k=delta, n=n, truncated=hres.truncated))
        H = hres.hess
        h_norm = spectral_norm(H)
        h_bound = hessian_bound(gn, delta, cfg.tau_cap)
        capped = False
        if cfg.crn:
            H, capped = cap_hessian(H, gn, delta, cfg.tau_cap)
            if capped:
                log.debug("iteration %d: hessian norm %.3g capped at %.3g", k, h_norm, h_bound)

        model = TRModel(center.f_bar, center.g_bar, H, delta, state.lambda_k, cfg.shift_multiplier)
        sol = solve_exact(H, center.g_bar, delta, model.shift)
        x_trial = state.x + sol.s

        if cfg.crn:
            trial_spec = self._spec(k, Role.TRIAL, Role.CENTER)
            trial = fixed_estimate(oracle, x_trial, center.n, trial_spec, cfg.sigma0, budget)
        else:
            trial_spec = self._spec(k, Role.TRIAL)
            trial = adaptive_estimate_point(oracle, x_trial, delta, params, trial_spec, budget)
            self._log_call("point", x_trial, trial, params, delta_k=delta)

        pred = sol.pred_red
        rho = (center.f_bar - trial.f_bar) / pred if pred > 0 else math.nan
        if not pred > 0:
            log.debug("iteration %d: non-positive predicted reduction %.3g", k, pred)
        decision = success_decision(rho, sol.step_norm, delta, gn, trial.g_norm, state.lambda_k,
                                    lam_sched, cfg)
        new = update_parameters(state, decision, x_trial, center.g_bar, trial.g_bar, cfg)
        n_hess = int(sum(hres.counts))
        new.oracle_calls_main = state.oracle_calls_main + center.n + trial.n
        new.oracle_calls_hess = state.oracle_calls_hess + n_hess
        assert budget.used - used0 == center.n + trial.n + n_hess

        truth = oracle.truth(new.x)
        truncated = center.truncated or trial.truncated or hres.truncated
        if truncated:
            log.info("iteration %d: sample size truncated at n_max=%d", k, cfg.n_max)
        rec = IterationRecord(
            k=k, n_k=center.n, n_k_s=trial.n, n_hess_total=n_hess, delta_k=delta,
            lambda_k=state.lambda_k, rho_k=rho, accept=decision, step_norm=sol.step_norm,
            g_bar_norm=gn, g_bar_s_norm=trial.g_norm, f_bar=center.f_bar, f_bar_s=trial.f_bar,
            truth_f=None if truth is None else float(truth[0]),
            truth_g_norm=None if truth is None else float(np.linalg.norm(truth[1])),
            budget_cum=int(budget.used), truncated=bool(truncated),
            pred_red=pred, lambda_sched=lam_sched, eps_k=eps_k, shift=model.shift, ell=sol.ell,
            on_boundary=sol.on_boundary, hess_norm=h_norm, hess_bound=h_bound, hess_capped=capped,
            sigma_mx=center.sigma_mx, center_noise=center_spec.label(), trial_noise=trial_spec.label(),
        )
        return new, rec

    def _log_call(self, kind, x, est, params, **extra):
        if self.trace is not None:
            self.trace.append(dict(kind=kind, x=np.array(x, dtype=float), spec=est.stream, params=params,
                                   n=est.n, truncated=est.truncated, **extra))

    def run(self, x0) -> RunResult:
        cfg = self.cfg
        x0 = np.asarray(x0, dtype=float).copy()
        truth0 = self.oracle.truth(x0)
        res = RunResult([], x0, x0.copy(), path=[(0, x0.copy())])
        if truth0 is not None:
            res.truth_f0, res.truth_g0 = float(truth0[0]), float(np.linalg.norm(truth0[1]))
        if self.budget.remaining <= 0:
            return res
        state = self.initialize(x0)
        res.init_calls = self.budget.used
        if cfg.stop_grad_tol is not None and res.truth_g0 is not None and res.truth_g0 <= cfg.stop_grad_tol:
            res.status = "truth_tol"
        else:
            while True:
                if cfg.max_iter is not None and state.k >= cfg.max_iter:
                    res.status = "max_iter"
                    break
                try:
                    state, rec = self.step(state)
                except BudgetExhausted:
                    res.status = "budget"
                    break
                except StationaryPoint:
                    res.status = "stationary"
                    break
                res.records.append(rec)
                if rec.accept != "U":
                    res.path.append((rec.budget_cum, state.x.copy()))
                if (cfg.stop_grad_tol is not None and rec.truth_g_norm is not None
                        and rec.truth_g_norm <= cfg.stop_grad_tol):
                    res.status = "truth_tol"
                    break
        res.x_final = np.asarray(state.x, dtype=float).copy()
        res.total_calls = int(self.budget.used)
        res.meta["final_state"] = state
        return res


def initialize(x0, oracle, cfg: SolverConfig, seed: int, run_id: int = 0) -> SolverState:
    return RegAstro(oracle, cfg, seed, run_id).initialize(x0)


def run(x0, oracle, cfg: SolverConfig = SolverConfig(), seed: int = 0, budget: float | None = None,
        run_id: int = 0) -> RunResult:
    """Run until the budget is spent or a stopping test fires."""
    b = Budget(cfg.budget_max if budget is None else budget)
    return RegAstro(oracle, cfg, seed, run_id, b).run(x0)
