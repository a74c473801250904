"""Stochastic first-order oracle interface."""

from __future__ import annotations

import numpy as np

from ..rng import StreamSpec, Substream, derive_stream


class OracleError(ValueError):
    pass


class StochasticOracle:
    """Noisy (F, G) oracle.

    Subclasses implement :meth:`sample`; :meth:`sample_block` may be overridden
    with a vectorized version but must agree draw for draw with ``sample``.
    ``deterministic`` oracles return the same pair for every key, which lets
    the estimator skip redundant evaluations while still charging them.
    """

    dim: int
    deterministic: bool = False
    noise_sigma: float | None = None
    name: str = "oracle"

    def sample(self, x: np.ndarray, stream: Substream) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def sample_block(self, x: np.ndarray, spec: StreamSpec, start: int,
                     count: int) -> tuple[np.ndarray, np.ndarray]:
        F = np.empty(count)
        G = np.empty((count, self.dim))
        for i in range(count):
            F[i], G[i] = self.sample(x, derive_stream(spec.root_seed, spec.key(start + i)))
        return F, G

    def truth(self, x: np.ndarray) -> tuple[float, np.ndarray] | None:
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"
