"""Closed-form test problems: stochastic Rosenbrock and a noisy quadratic."""

from __future__ import annotations

import numpy as np

from ..rng import StreamSpec, Substream
from .base import OracleError, StochasticOracle


def rosenbrock(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(10.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def rosenbrock_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    inner = x[1:] - x[:-1] ** 2
    g[:-1] = -40.0 * x[:-1] * inner - 2.0 * (1.0 - x[:-1])
    g[1:] += 20.0 * inner
    return g


def rosenbrock_hess(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.zeros((d, d))
    i = np.arange(d - 1)
    H[i, i] += 120.0 * x[:-1] ** 2 - 40.0 * x[1:] + 2.0
    H[i + 1, i + 1] += 20.0
    H[i, i + 1] = H[i + 1, i] = -40.0 * x[:-1]
    return H


class Rosenbrock(StochasticOracle):
    """Rosenbrock with additive noise: F = f + sum of d N(0, s^2), G = grad f + N(0, s^2 I).

    ``scale`` multiplies the unit normals; 0 gives the noiseless problem.
    """

    name = "rosenbrock"

    def __init__(self, dim: int, scale: float = 1.0):
        if dim < 2:
            raise OracleError("rosenbrock needs dim >= 2")
        self.dim = int(dim)
        self.scale = float(scale)
        self.deterministic = self.scale == 0.0
        self.noise_sigma = self.scale * np.sqrt(self.dim)

    def sample(self, x, stream: Substream):
        z = self.scale * stream.normals(2 * self.dim)
        return rosenbrock(x) + z[: self.dim].sum(), rosenbrock_grad(x) + z[self.dim:]

    def sample_block(self, x, spec: StreamSpec, start, count):
        f, g = rosenbrock(x), rosenbrock_grad(x)
        if self.deterministic:
            return np.full(count, f), np.broadcast_to(g, (count, self.dim)).copy()
        z = self.scale * spec.normal_block(start, count, 2 * self.dim)
        return f + z[:, : self.dim].sum(axis=1), g + z[:, self.dim:]

    def truth(self, x):
        return rosenbrock(x), rosenbrock_grad(x)


class NoisyQuadratic(StochasticOracle):
    """F = x'Ax/2 + sigma*xi, G = Ax + sigma*zeta with unit Gaussian xi, zeta."""

    name = "quadratic"

    def __init__(self, A, sigma: float = 1.0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise OracleError("A must be square")
        self.A = 0.5 * (A + A.T)
        self.dim = A.shape[0]
        self.sigma = float(sigma)
        self.deterministic = self.sigma == 0.0
        self.noise_sigma = self.sigma

    @classmethod
    def diagonal(cls, eigenvalues, sigma: float = 1.0) -> "NoisyQuadratic":
        return cls(np.diag(np.asarray(eigenvalues, dtype=float)), sigma)

    def sample(self, x, stream: Substream):
        z = self.sigma * stream.normals(1 + self.dim)
        f, g = self.truth(x)
        return f + z[0], g + z[1:]

    def sample_block(self, x, spec: StreamSpec, start, count):
        f, g = self.truth(x)
        if self.deterministic:
            return np.full(count, f), np.broadcast_to(g, (count, self.dim)).copy()
        z = self.sigma * spec.normal_block(start, count, 1 + self.dim)
        return f + z[:, 0], g + z[:, 1:]

    def truth(self, x):
        x = np.asarray(x, dtype=float)
        g = self.A @ x
        return 0.5 * float(x @ g), g
