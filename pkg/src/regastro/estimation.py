"""Sequential Monte Carlo estimation of (f, grad f) with adaptive stopping.

The stopping rules have the form

    sigma_mx(n) / sqrt(n) <= kappa_a / sqrt(lambda_k) * radius(n) ** power

and are checked after every single sample.  Samples are *generated* in
vectorized blocks, the first index at which the rule holds is located from
prefix statistics, and only that prefix is kept and charged.  The draws past
the stopping index are never part of the estimate, so the result is exactly
the per-sample stopping time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import StreamSpec

CUBIC = 3
QUADRATIC = 2

_BLOCK_MIN = 16
_BLOCK_MAX = 1 << 15


class EstimationError(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    """Raised when the oracle budget runs out before a stopping rule is met."""


class Budget:
    """Oracle-call counter shared by everything in one run."""

    def __init__(self, limit: float = math.inf):
        self.limit = limit
        self.used = 0

    @property
    def remaining(self) -> float:
        return self.limit - self.used

    def charge(self, n: int) -> None:
        self.used += int(n)


@dataclass
class EstimatorState:
    """Running mean and sum of squared deviations for F and each coordinate of G."""

    dim: int
    sigma0: float = 1.0
    n: int = 0
    mean_f: float = 0.0
    m2_f: float = 0.0
    mean_g: np.ndarray = field(default=None)
    m2_g: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mean_g is None:
            self.mean_g = np.zeros(self.dim)
        if self.m2_g is None:
            self.m2_g = np.zeros(self.dim)

    def update(self, f: float, g) -> "EstimatorState":
        """Single-sample Welford recurrence."""
        g = np.asarray(g, dtype=float)
        if g.shape != (self.dim,):
            raise EstimationError(f"gradient sample has shape {g.shape}, expected ({self.dim},)")
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            raise EstimationError("non-finite oracle sample")
        self.n += 1
        df = f - self.mean_f
        self.mean_f += df / self.n
        self.m2_f += df * (f - self.mean_f)
        dg = g - self.mean_g
        self.mean_g = self.mean_g + dg / self.n
        self.m2_g = self.m2_g + dg * (g - self.mean_g)
        return self

    def merge(self, F, G) -> "EstimatorState":
        """Absorb a block of samples (two-pass within the block, pairwise merge)."""
        F = np.asarray(F, dtype=float)
        G = np.asarray(G, dtype=float).reshape(F.size, self.dim)
        m = F.size
        if m == 0:
            return self
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(G))):
            raise EstimationError("non-finite oracle sample")
        bf = F.mean()
        bm2f = float(np.sum((F - bf) ** 2))
        bg = G.mean(axis=0)
        bm2g = np.sum((G - bg) ** 2, axis=0)
        n0, n = self.n, self.n + m
        df = bf - self.mean_f
        dg = bg - self.mean_g
        self.mean_f = self.mean_f + df * m / n
        self.m2_f = self.m2_f + bm2f + df * df * n0 * m / n
        self.mean_g = self.mean_g + dg * m / n
        self.m2_g = self.m2_g + bm2g + dg * dg * n0 * m / n
        self.n = n
        return self

    @property
    def var_f(self) -> float:
        return self.m2_f / (self.n - 1) if self.n > 1 else 0.0

    @property
    def sigma_f_hat(self) -> float:
        return math.sqrt(max(self.var_f, 0.0))

    @property
    def sigma_g_hat(self) -> float:
        # trace of the sample covariance
        if self.n < 2:
            return 0.0
        return math.sqrt(max(float(self.m2_g.sum()) / (self.n - 1), 0.0))

    @property
    def sigma_mx(self) -> float:
        return max(self.sigma_f_hat, self.sigma_g_hat, self.sigma0)

    def estimates(self, stream: StreamSpec | None = None, truncated: bool = False) -> "Estimates":
        return Estimates(
            f_bar=float(self.mean_f),
            g_bar=np.array(self.mean_g, dtype=float),
            sigma_f_hat=self.sigma_f_hat,
            sigma_g_hat=self.sigma_g_hat,
            sigma_mx=self.sigma_mx,
            n=self.n,
            truncated=truncated,
            stream=stream,
        )


def welford_update(state: EstimatorState, sample) -> EstimatorState:
    f, g = sample
    return state.update(f, g)


@dataclass
class Estimates:
    f_bar: float
    g_bar: np.ndarray
    sigma_f_hat: float
    sigma_g_hat: float
    sigma_mx: float
    n: int
    truncated: bool = False
    stream: StreamSpec | None = None
    rule_lhs: float = math.nan
    rule_rhs: float = math.nan

    @property
    def g_norm(self) -> float:
        return float(np.linalg.norm(self.g_bar))

    def keys(self):
        """The sample keys this estimate consumed, in order."""
        return [self.stream.key(i) for i in range(self.n)]


@dataclass(frozen=True)
class SamplingParams:
    kappa_a: float = 1.0
    lambda_k: float = 1.1
    power: int = CUBIC
    n_min: int = 2
    n_max: int = 10**7
    sigma0: float = 1.0

    def __post_init__(self):
        if self.kappa_a <= 0:
            raise EstimationError("kappa_a must be positive")
        if self.power not in (CUBIC, QUADRATIC):
            raise EstimationError("power must be 2 or 3")
        if self.n_min < 2 or self.n_max < self.n_min:
            raise EstimationError("need 2 <= n_min <= n_max")

    def rhs(self, radius):
        return self.kappa_a / math.sqrt(self.lambda_k) * np.asarray(radius, dtype=float) ** self.power


def delta_tilde(g_norm, lambda_cap: float, delta_pre: float, c_g: float, eps_k: float):
    """Radius proxy used while the center sample size is still being chosen.

    Works elementwise on an array of running gradient norms.
    """
    inner = np.minimum(delta_pre, np.sqrt(np.asarray(g_norm, dtype=float) / (16.0 * lambda_cap)) - c_g * delta_pre)
    out = np.maximum(math.sqrt(eps_k / lambda_cap), inner)
    return float(out) if np.ndim(out) == 0 else out


def initial_sample_size(sigma0: float, kappa_a: float, delta0_pre: float,
                        n_min: int = 2, n_max: int = 10**7) -> int:
    raw = (sigma0 / (kappa_a * delta0_pre ** 3)) ** 2
    return int(min(max(math.ceil(raw), n_min), n_max))


def _prefix_stats(state: EstimatorState, F: np.ndarray, G: np.ndarray):
    """Statistics after each prefix of the block, merged with ``state``."""
    m = F.size
    j = np.arange(1, m + 1, dtype=float)
    n0 = state.n
    n = n0 + j
    shift_f = state.mean_f if n0 else F[0]
    shift_g = state.mean_g if n0 else G[0]
    yf = F - shift_f
    s1 = np.cumsum(yf)
    s2 = np.cumsum(yf * yf)
    bmean_f = shift_f + s1 / j
    bm2_f = np.maximum(s2 - s1 * s1 / j, 0.0)
    yg = G - shift_g
    t1 = np.cumsum(yg, axis=0)
    t2 = np.cumsum(yg * yg, axis=0)
    bmean_g = shift_g + t1 / j[:, None]
    bm2_g = np.maximum(t2 - t1 * t1 / j[:, None], 0.0)
    if n0:
        w = (n0 * j / n)
        df = bmean_f - state.mean_f
        m2_f = state.m2_f + bm2_f + df * df * w
        dg = bmean_g - state.mean_g
        mean_g = state.mean_g + dg * (j / n)[:, None]
        m2_g = state.m2_g + bm2_g + dg * dg * w[:, None]
    else:
        m2_f, mean_g, m2_g = bm2_f, bmean_g, bm2_g
    with np.errstate(divide="ignore", invalid="ignore"):
        var_f = np.where(n > 1, m2_f / (n - 1), 0.0)
        var_g = np.where(n > 1, m2_g.sum(axis=1) / (n - 1), 0.0)
    sig = np.maximum(np.sqrt(np.maximum(var_f, var_g)), state.sigma0)
    return n, sig, np.linalg.norm(mean_g, axis=1)


def _sequential(oracle, x, params: SamplingParams, stream: StreamSpec, radius_fn,
                budget: Budget | None) -> Estimates:
    """Draw until ``sigma_mx/sqrt(n) <= params.rhs(radius_fn(gnorm))`` first holds."""
    x = np.asarray(x, dtype=float)
    cap = params.n_max
    budget_cap = False
    if budget is not None and budget.remaining < cap:
        cap, budget_cap = int(max(budget.remaining, 0)), True
    state = EstimatorState(oracle.dim, params.sigma0)

    if oracle.deterministic:
        return _deterministic(oracle, x, params, stream, radius_fn, budget, cap, budget_cap, state)

    block = params.n_min
    while True:
        count = min(block, cap - state.n)
        if count <= 0:
            if budget is not None:
                budget.charge(state.n)
            if budget_cap:
                raise BudgetExhausted(f"budget exhausted after {state.n} samples")
            est = state.estimates(stream, truncated=True)
            est.rule_lhs = state.sigma_mx / math.sqrt(max(state.n, 1))
            est.rule_rhs = float(params.rhs(radius_fn(est.g_norm)))
            return est
        F, G = oracle.sample_block(x, stream, state.n, count)
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(G))):
            raise EstimationError("non-finite oracle sample")
        n, sig, gnorm = _prefix_stats(state, F, G)
        lhs = sig / np.sqrt(n)
        rhs = params.rhs(radius_fn(gnorm))
        ok = (lhs <= rhs) & (n >= params.n_min)
        if ok.any():
            j = int(np.argmax(ok))
            state.merge(F[: j + 1], G[: j + 1])
            if budget is not None:
                budget.charge(state.n)
            est = state.estimates(stream)
            est.rule_lhs, est.rule_rhs = float(lhs[j]), float(rhs[j])
            return est
        state.merge(F, G)
        need = (sig[-1] / max(rhs[-1], 1e-300)) ** 2
        grow = min(need * 1.2, 4.0 * state.n + _BLOCK_MAX) - state.n
        block = int(min(max(grow, _BLOCK_MIN, state.n // 4), _BLOCK_MAX))


def _deterministic(oracle, x, params, stream, radius_fn, budget, cap, budget_cap, state):
    # all samples identical: sigma_mx = sigma0, rhs constant, stopping time in closed form
    F, G = oracle.sample_block(x, stream, 0, 1)
    f, g = float(F[0]), np.asarray(G[0], dtype=float)
    rhs = float(params.rhs(radius_fn(float(np.linalg.norm(g)))))
    s0 = params.sigma0
    guess = (s0 / rhs) ** 2 if rhs > 0 else math.inf
    n = params.n_min if guess <= params.n_min else int(min(math.ceil(guess), cap + 1))
    while n <= cap and s0 / math.sqrt(n) > rhs:
        n += 1
    while n - 1 >= params.n_min and s0 / math.sqrt(n - 1) <= rhs:
        n -= 1
    truncated = n > cap
    if truncated:
        n = cap
        if budget is not None:
            budget.charge(n)
        if budget_cap:
            raise BudgetExhausted(f"budget exhausted after {n} samples")
    elif budget is not None:
        budget.charge(n)
    state.n, state.mean_f, state.mean_g = n, f, g
    est = state.estimates(stream, truncated=truncated)
    est.rule_lhs, est.rule_rhs = s0 / math.sqrt(max(n, 1)), rhs
    return est


def adaptive_estimate_center(oracle, x, params: SamplingParams, lambda_cap: float,
                             delta_pre: float, c_g: float, eps_k: float, stream: StreamSpec,
                             budget: Budget | None = None) -> Estimates:
    """Center estimate; the radius in the rule is the per-sample proxy ``delta_tilde``."""
    return _sequential(oracle, x, params, stream,
                       lambda gn: delta_tilde(gn, lambda_cap, delta_pre, c_g, eps_k), budget)


def adaptive_estimate_point(oracle, x, delta_k: float, params: SamplingParams,
                            stream: StreamSpec, budget: Budget | None = None) -> Estimates:
    """Estimate at a point whose radius ``delta_k`` is already known."""
    if delta_k <= 0:
        raise EstimationError("delta_k must be positive")
    return _sequential(oracle, x, params, stream, lambda gn: np.full(np.shape(gn), delta_k), budget)


def fixed_estimate(oracle, x, n: int, stream: StreamSpec, sigma0: float = 1.0,
                   budget: Budget | None = None) -> Estimates:
    """Plain sample mean over keys ``0..n-1`` of ``stream``."""
    x = np.asarray(x, dtype=float)
    state = EstimatorState(oracle.dim, sigma0)
    if budget is not None and budget.remaining < n:
        budget.charge(max(int(budget.remaining), 0))
        raise BudgetExhausted(f"need {n} samples, {budget.remaining} left")
    if oracle.deterministic:
        F, G = oracle.sample_block(x, stream, 0, 1)
        state.n, state.mean_f, state.mean_g = n, float(F[0]), np.asarray(G[0], dtype=float)
    else:
        for start in range(0, n, _BLOCK_MAX):
            F, G = oracle.sample_block(x, stream, start, min(_BLOCK_MAX, n - start))
            state.merge(F, G)
    if budget is not None:
        budget.charge(n)
    return state.estimates(stream)
