"""Local quadratic model: M(s) = f_bar + s'g + s'Hs/2 with a stochastic FD Hessian."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimation import Budget, SamplingParams, adaptive_estimate_point
from .rng import Role, StreamSpec


@dataclass
class TRModel:
    f_bar: float
    g: np.ndarray
    hess: np.ndarray
    delta: float
    lambda_k: float
    shift_multiplier: float = 1.0
    shift: float = field(init=False)

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        H = np.asarray(self.hess, dtype=float)
        self.hess = 0.5 * (H + H.T)
        self.shift = self.shift_multiplier * math.sqrt(self.lambda_k * float(np.linalg.norm(self.g)))

    @classmethod
    def from_estimate(cls, f_bar, g, hess, lambda_k, shift_multiplier=1.0):
        """Model with the radius tied to the gradient: 16 * lambda * delta**2 = |g|."""
        from .solver import trust_radius

        delta = trust_radius(float(np.linalg.norm(g)), lambda_k)
        return cls(f_bar, g, hess, delta, lambda_k, shift_multiplier)

    def __call__(self, s):
        return model_eval(self, s)


def model_eval(model: TRModel, s) -> float:
    s = np.asarray(s, dtype=float)
    return float(model.f_bar + s @ model.g + 0.5 * s @ model.hess @ s)


def predicted_reduction(model: TRModel, s) -> float:
    """M(0) - M(s)."""
    s = np.asarray(s, dtype=float)
    return float(-(s @ model.g + 0.5 * s @ model.hess @ s))


@dataclass
class HessianResult:
    hess: np.ndarray
    counts: list[int]
    truncated: bool = False


def build_fd_hessian(oracle, x, delta: float, g_center, params: SamplingParams,
                     root_seed: int, run_id: int, iteration: int,
                     noise_role: int | None = None,
                     budget: Budget | None = None) -> HessianResult:
    """Forward-difference Hessian from gradient estimates at x + delta * e_j.

    Column j is ``(G_bar(x + delta e_j) - g_center) / delta``; each perturbed
    gradient is sampled with the known-radius rule.  ``noise_role`` makes every
    column reuse that role's draws (CRN).  The result is symmetrized.
    """
    x = np.asarray(x, dtype=float)
    g_center = np.asarray(g_center, dtype=float)
    d = x.size
    H = np.empty((d, d))
    counts = []
    truncated = False
    for j in range(d):
        xj = x.copy()
        xj[j] += delta
        spec = StreamSpec(root_seed, run_id, iteration, Role.hess(j), noise_role)
        est = adaptive_estimate_point(oracle, xj, delta, params, spec, budget)
        H[:, j] = (est.g_bar - g_center) / delta
        counts.append(est.n)
        truncated |= est.truncated
    return HessianResult(0.5 * (H + H.T), counts, truncated)


def spectral_norm(H) -> float:
    H = np.asarray(H, dtype=float)
    if H.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (H + H.T)))))


def hessian_bound(g_norm: float, delta: float, tau_cap: float) -> float:
    return g_norm / (tau_cap * delta)


def cap_hessian(hess, g_norm: float, delta: float, tau_cap: float = 0.5):
    """Scale H so that |H| <= |g| / (tau * delta).  Returns (H, scaled)."""
    if not 0.0 < tau_cap <= 1.0:
        raise ValueError("tau_cap must lie in (0, 1]")
    bound = hessian_bound(g_norm, delta, tau_cap)
    nrm = spectral_norm(hess)
    if nrm > bound:
        return np.asarray(hess, dtype=float) * (bound / nrm), True
    return np.asarray(hess, dtype=float), False
