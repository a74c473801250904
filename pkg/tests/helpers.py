"""Independent reference computations shared by the test modules."""

import math

import numpy as np
from scipy.optimize import brentq


def random_instance(rng, hard: bool = False):
    """Shifted subproblem data with radius and shift tied to a random Lambda.

    ``hard`` zeroes the gradient along the most negative eigenvector and
    makes it small enough that the hard case actually occurs.
    """
    d = int(rng.integers(2, 9))
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eig = np.sort(rng.uniform(-5.0, 5.0, d))
    lam = rng.uniform(0.1, 10.0)
    g = rng.standard_normal(d)
    if hard:
        eig[0] = -rng.uniform(2.0, 5.0)
        eig[1:] = np.maximum(eig[1:], eig[0] + 1.0)
        a = rng.standard_normal(d)
        a[0] = 0.0
        a *= rng.uniform(1e-3, 1e-1) / np.linalg.norm(a)
        g = Q @ a
    H = Q @ np.diag(eig) @ Q.T
    H = 0.5 * (H + H.T)
    gn = float(np.linalg.norm(g))
    delta = math.sqrt(gn / (16 * lam))
    shift = math.sqrt(lam * gn)
    return H, g, delta, shift, lam


def shifted_value(H, g, shift, s):
    return float(g @ s + 0.5 * s @ (H + shift * np.eye(g.size)) @ s)


def brute_force_min(H, g, delta, shift, rng, n_sphere=4000):
    """Global minimum of the shifted model over the ball, computed without the package.

    Candidates: the interior Newton point, the boundary root of the secular
    equation located by bracketing on a geometric grid in ell, the hard-case
    boundary points, and random points on the sphere as a sanity floor.
    """
    d = g.size
    B = H + shift * np.eye(d)
    w, Q = np.linalg.eigh(B)
    a = Q.T @ g
    cands = [np.zeros(d)]
    if w[0] > 0:
        s = -Q @ (a / w)
        if np.linalg.norm(s) <= delta:
            cands.append(s)
    lo = max(0.0, -w[0])

    def norm_at(ell):
        return float(np.linalg.norm(a / (w + ell)))

    grid = lo + np.geomspace(1e-12, 1e6, 4000)
    vals = np.array([norm_at(e) - delta for e in grid])
    for i in np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0)):
        ell = brentq(lambda e: norm_at(e) - delta, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15, maxiter=500)
        cands.append(-Q @ (a / (w + ell)))
    near = w <= w[0] + 1e-9 * (1 + abs(w).max())
    if w[0] <= 0:
        coef = np.zeros(d)
        coef[~near] = -a[~near] / (w[~near] + lo)
        sp = Q @ coef
        rest = delta ** 2 - sp @ sp
        if rest >= 0:
            v = Q[:, np.flatnonzero(near)[0]]
            cands += [sp + math.sqrt(rest) * v, sp - math.sqrt(rest) * v]
    u = rng.standard_normal((n_sphere, d))
    u *= delta / np.linalg.norm(u, axis=1, keepdims=True)
    cands += list(u)
    best = min(cands, key=lambda s: shifted_value(H, g, shift, s))
    return shifted_value(H, g, shift, best), best
