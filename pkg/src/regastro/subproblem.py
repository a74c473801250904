"""Exact solution of the shifted trust-region subproblem

    min_s  g's + s'(H + shift*I)s/2   subject to  |s| <= delta.

A step s is a global solution iff some ell >= 0 gives

    ell * (|s| - delta) = 0,
    (H + shift*I + ell*I) s = -g,
    H + shift*I + ell*I  positive semidefinite.

For moderate dimension the secular equation is solved in the eigenbasis of
H + shift*I, with an explicit hard-case branch.  Larger problems use
Cholesky-based Newton iterations on ell and fall back to the eigenbasis when
the hard case shows up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, solve_triangular

EIGEN_MAX_DIM = 64


class SubproblemError(ValueError):
    pass


@dataclass
class SubproblemSolution:
    s: np.ndarray
    ell: float
    on_boundary: bool
    pred_red: float
    kkt_residual: float
    hard_case: bool = False

    @property
    def step_norm(self) -> float:
        return float(np.linalg.norm(self.s))


def default_tol(hess, g) -> float:
    return 1e-10 * (1.0 + float(np.linalg.norm(g)) + float(np.linalg.norm(hess, 2)))


def _finish(H, g, shift, s, ell, delta, hard=False):
    s = np.asarray(s, dtype=float)
    r = (H + (shift + ell) * np.eye(g.size)) @ s + g
    pred = float(-(s @ g + 0.5 * s @ H @ s))
    on_boundary = ell > 0 or hard or abs(np.linalg.norm(s) - delta) <= 1e-12 * delta
    return SubproblemSolution(s, float(ell), bool(on_boundary), pred, float(np.linalg.norm(r)), hard)


def _sign_fix(v):
    # deterministic orientation: first non-negligible coordinate positive
    i = int(np.argmax(np.abs(v) > 1e-12 * np.abs(v).max()))
    return v if v[i] > 0 else -v


def _secular_root(w, a, delta, lo, hi, maxiter=200):
    """Root of 1/phi(ell) - 1/delta on (lo, hi], phi(ell) = |a / (w + ell)|."""
    a2 = a * a

    def phi_and_slope(ell):
        den = w + ell
        phi = math.sqrt(float(np.sum(a2 / den ** 2)))
        dphi = -float(np.sum(a2 / den ** 3)) / phi
        return phi, dphi

    ell = 0.5 * (lo + hi)
    if lo >= 0.0 and w[0] + lo > 0.0:
        ell = lo
    for _ in range(maxiter):
        if not lo <= ell <= hi or w[0] + ell <= 0.0:
            ell = 0.5 * (lo + hi)
        phi, dphi = phi_and_slope(ell)
        psi = 1.0 / phi - 1.0 / delta
        if abs(phi - delta) <= 1e-14 * delta:
            break
        if psi < 0:
            lo = ell
        else:
            hi = ell
        if hi - lo <= 4e-16 * max(1.0, abs(hi)):
            break
        # Newton on psi: psi' = -dphi / phi**2
        ell = ell - psi * phi * phi / (-dphi)
    return ell


def _solve_eigen(H, g, delta, shift, gnorm):
    d = g.size
    B = H + shift * np.eye(d)
    w, Q = eigh(B)
    a = Q.T @ g
    lam1 = w[0]
    scale = 1.0 + float(np.max(np.abs(w)))

    if lam1 > 0 and gnorm > 0:
        s = -Q @ (a / w)
        if np.linalg.norm(s) <= delta:
            return _finish(H, g, shift, s, 0.0, delta)
    if gnorm == 0.0 and lam1 >= 0:
        return _finish(H, g, shift, np.zeros(d), 0.0, delta)

    lo = max(0.0, -lam1)
    near = w <= lam1 + 1e-12 * scale
    if lam1 <= 0 and np.all(np.abs(a[near]) <= 1e-10 * gnorm):
        den = w[~near] + lo
        coef = np.zeros(d)
        coef[~near] = -a[~near] / den
        s_perp = Q @ coef
        rest = delta * delta - float(s_perp @ s_perp)
        if rest >= 0.0:
            v = _sign_fix(Q[:, np.flatnonzero(near)[0]])
            s = s_perp + math.sqrt(rest) * v
            return _finish(H, g, shift, s, lo, delta, hard=True)

    hi = max(lo, gnorm / delta - lam1) + 1e-300
    keep = np.abs(a) > 0
    ell = _secular_root(w[keep], a[keep], delta, lo, hi)
    s = -Q @ np.where(keep, a / np.where(keep, w + ell, 1.0), 0.0)
    return _finish(H, g, shift, s, ell, delta)


def _solve_cholesky(H, g, delta, shift, gnorm, maxiter=100):
    d = g.size
    B = H + shift * np.eye(d)
    lam1 = float(eigh(B, eigvals_only=True, subset_by_index=[0, 0])[0])
    lo = max(0.0, -lam1)
    hi = max(lo, gnorm / delta - lam1)
    I = np.eye(d)

    def solve(ell):
        c = cho_factor(B + ell * I, lower=True)
        s = cho_solve(c, -g)
        return c, s

    if lam1 > 0:
        c, s = solve(0.0)
        if np.linalg.norm(s) <= delta:
            return _finish(H, g, shift, s, 0.0, delta)
    # hard case probe just above the pole
    probe = lo + 1e-10 * (1.0 + abs(lo))
    try:
        _, s = solve(probe)
    except np.linalg.LinAlgError:
        s = None
    if lam1 <= 0 and (s is None or np.linalg.norm(s) <= delta):
        return _solve_eigen(H, g, delta, shift, gnorm)
    ell = probe
    for _ in range(maxiter):
        if not lo < ell <= hi:
            ell = 0.5 * (lo + hi)
        try:
            c, s = solve(ell)
        except np.linalg.LinAlgError:
            lo = ell
            ell = 0.5 * (lo + hi)
            continue
        sn = float(np.linalg.norm(s))
        if abs(sn - delta) <= 1e-14 * delta:
            break
        if sn > delta:
            lo = ell
        else:
            hi = ell
        q = solve_triangular(c[0], s, lower=True)
        ell = ell + (sn / np.linalg.norm(q)) ** 2 * (sn - delta) / delta
        if hi - lo <= 4e-16 * max(1.0, hi):
            break
    return _finish(H, g, shift, s, ell, delta)


def solve_exact(hess, g, delta: float, shift: float = 0.0, tol: float | None = None,
                method: str = "auto") -> SubproblemSolution:
    """Global minimizer of the shifted model over the ball of radius ``delta``.

    ``method`` is "eigen", "cholesky" or "auto" (eigen up to 64 dimensions).
    In the hard case the null-space direction is oriented so its first
    non-negligible coordinate is positive.
    """
    H = np.asarray(hess, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    if H.shape != (g.size, g.size):
        raise SubproblemError(f"hessian shape {H.shape} does not match gradient size {g.size}")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g)) and math.isfinite(delta) and math.isfinite(shift)):
        raise SubproblemError("non-finite subproblem data")
    if delta <= 0:
        raise SubproblemError("delta must be positive")
    if shift < 0:
        raise SubproblemError("shift must be non-negative")
    H = 0.5 * (H + H.T)
    gnorm = float(np.linalg.norm(g))
    if method == "auto":
        method = "eigen" if g.size <= EIGEN_MAX_DIM else "cholesky"
    if method == "eigen":
        sol = _solve_eigen(H, g, delta, shift, gnorm)
    elif method == "cholesky":
        sol = _solve_cholesky(H, g, delta, shift, gnorm)
    else:
        raise SubproblemError(f"unknown method {method!r}")
    if tol is None:
        tol = default_tol(H, g)
    if method == "cholesky" and sol.kkt_residual > tol * max(1.0, gnorm):
        sol = _solve_eigen(H, g, delta, shift, gnorm)
    return sol


def verify_kkt(sol: SubproblemSolution, hess, g, delta: float, shift: float,
               tol: float | None = None) -> bool:
    H = 0.5 * (np.asarray(hess, dtype=float) + np.asarray(hess, dtype=float).T)
    g = np.asarray(g, dtype=float)
    if tol is None:
        tol = default_tol(H, g)
    s = np.asarray(sol.s, dtype=float)
    ell = sol.ell
    M = H + (shift + ell) * np.eye(g.size)
    sn = float(np.linalg.norm(s))
    stationary = np.linalg.norm(M @ s + g) <= tol * max(1.0, float(np.linalg.norm(g)))
    complementary = abs(ell * (sn - delta)) <= tol
    feasible = sn <= delta + tol * max(1.0, delta)
    psd = float(np.linalg.eigvalsh(M)[0]) >= -tol * max(1.0, float(np.linalg.norm(H, 2)))
    return bool(ell >= 0 and stationary and complementary and feasible and psd)


def check_inexact_conditions(s, hess, g, lambda_k: float, g_norm: float, c: float) -> bool:
    """Sufficient conditions for an inexact step: a relative residual bound and
    positive curvature of the partially shifted model along s."""
    if not 0.0 <= c < 1.0:
        raise ValueError("c must lie in [0, 1)")
    s = np.asarray(s, dtype=float)
    g = np.asarray(g, dtype=float)
    r = c * math.sqrt(lambda_k * g_norm)
    M = np.asarray(hess, dtype=float) + r * np.eye(g.size)
    residual = float(np.linalg.norm(g + M @ s))
    return bool(residual <= r * float(np.linalg.norm(s)) and float(s @ M @ s) > 0.0)
