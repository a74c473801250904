"""Counter-based random streams keyed by (seed, run, iteration, role, sample index).

Every draw is a pure function of its key and position, computed with the
Philox4x32-10 block function.  Nothing is stateful across samples, so two
evaluations that share a key (common random numbers) see identical noise,
and replications can be generated in any order or in parallel.

Each 128-bit Philox output block yields two 53-bit uniforms; Gaussian and
exponential variates come from the inverse CDF so one uniform always maps
to exactly one variate.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "Role",
    "StreamKey",
    "StreamSpec",
    "Substream",
    "philox4x32",
    "derive_stream",
    "crn_pair",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO26 = np.uint64(1 << 26)
_INV53 = 1.0 / float(1 << 53)


def philox4x32(ctr, key, rounds: int = 10):
    """Philox4x32 block function, vectorized over the counter words.

    ``ctr`` is a 4-sequence of integer arrays (each word < 2**32, broadcastable);
    ``key`` is a pair of 32-bit ints.  Returns four uint64 arrays holding the
    32-bit output words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in ctr)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ np.uint64(k0),
            p1 & _LO,
            (p0 >> _S32) ^ c3 ^ np.uint64(k1),
            p0 & _LO,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _to_unit(hi, lo):
    # 53-bit uniform strictly inside (0, 1)
    bits = (hi >> np.uint64(5)) * _TWO26 + (lo >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) * _INV53


class Role:
    """Integer role codes used in the counter.  Hessian columns get one code each."""

    CENTER = 0
    TRIAL = 1
    BASELINE = 2
    INIT = 3
    EVAL = 4
    _HESS0 = 16

    @classmethod
    def hess(cls, j: int) -> int:
        return cls._HESS0 + int(j)

    @classmethod
    def name(cls, code: int) -> str:
        names = {0: "center", 1: "trial", 2: "baseline", 3: "init", 4: "eval"}
        if code >= cls._HESS0:
            return f"hess{code - cls._HESS0}"
        return names[code]


def _seed_key(root_seed: int, run_id: int) -> tuple[int, int]:
    digest = hashlib.blake2b(f"{int(root_seed)}:{int(run_id)}".encode(), digest_size=8).digest()
    word = int.from_bytes(digest, "little")
    return word & 0xFFFFFFFF, word >> 32


@dataclass(frozen=True)
class StreamKey:
    """Address of one oracle sample.

    ``noise_role`` overrides ``role`` in the noise-generating component; it is
    how a trial point re-consumes the center's draws under CRN while the
    telemetry still says ``trial``.
    """

    run_id: int
    iteration: int
    role: int
    sample_index: int
    noise_role: int | None = None

    @property
    def noise_code(self) -> int:
        return self.role if self.noise_role is None else self.noise_role

    def noise_id(self) -> tuple[int, int, int, int]:
        return (self.run_id, self.iteration, self.noise_code, self.sample_index)


class Substream:
    """Sequential view of the draws addressed by one key."""

    def __init__(self, root_seed: int, key: StreamKey):
        self.key = key
        self._k = _seed_key(root_seed, key.run_id)
        self._fixed = (key.sample_index, key.iteration, key.noise_code)
        self._pos = 0

    def uniforms(self, n: int) -> np.ndarray:
        start, self._pos = self._pos, self._pos + n
        first, last = start // 2, (start + n + 1) // 2
        blocks = np.arange(first, last, dtype=np.uint64)
        w0, w1, w2, w3 = philox4x32((blocks, *self._fixed), self._k)
        u = np.empty(2 * blocks.size)
        u[0::2] = _to_unit(w0, w1)
        u[1::2] = _to_unit(w2, w3)
        off = start - 2 * first
        return u[off:off + n]

    def normals(self, n: int) -> np.ndarray:
        return ndtri(self.uniforms(n))

    def exponentials(self, n: int, mean: float = 1.0) -> np.ndarray:
        return -mean * np.log1p(-self.uniforms(n))


def derive_stream(root_seed: int, key: StreamKey) -> Substream:
    """Return the substream for ``key``; identical keys give identical draws."""
    return Substream(root_seed, key)


@dataclass(frozen=True)
class StreamSpec:
    """A family of sample keys sharing (seed, run, iteration, role).

    ``key(i)`` names sample ``i``; the block helpers generate many samples at
    once and agree bit for bit with ``derive_stream(seed, key(i))``.
    """

    root_seed: int
    run_id: int
    iteration: int
    role: int
    noise_role: int | None = None

    def key(self, i: int) -> StreamKey:
        return StreamKey(self.run_id, self.iteration, self.role, int(i), self.noise_role)

    @property
    def noise_code(self) -> int:
        return self.role if self.noise_role is None else self.noise_role

    def label(self) -> str:
        return f"{self.root_seed}:{self.run_id}:{self.iteration}:{Role.name(self.noise_code)}"

    def with_noise_of(self, other: "StreamSpec") -> "StreamSpec":
        """Same telemetry role, but noise taken from ``other`` (CRN)."""
        return StreamSpec(self.root_seed, self.run_id, other.iteration, self.role, other.noise_code)

    def uniform_block(self, start: int, count: int, width: int) -> np.ndarray:
        """Uniforms for samples ``start .. start+count-1``; row i = first ``width`` draws."""
        nb = (width + 1) // 2
        key = _seed_key(self.root_seed, self.run_id)
        blocks = np.arange(nb, dtype=np.uint64)[None, :]
        idx = np.arange(start, start + count, dtype=np.uint64)[:, None]
        w0, w1, w2, w3 = philox4x32((blocks, idx, self.iteration, self.noise_code), key)
        u = np.empty((count, 2 * nb))
        u[:, 0::2] = _to_unit(w0, w1)
        u[:, 1::2] = _to_unit(w2, w3)
        return u[:, :width]

    def normal_block(self, start: int, count: int, width: int) -> np.ndarray:
        return ndtri(self.uniform_block(start, count, width))


def crn_pair(iteration: int, sample_index: int, run_id: int = 0, crn: bool = True) -> tuple[StreamKey, StreamKey]:
    """Center and trial keys for one sample index.

    With ``crn`` the trial key draws the center's noise; otherwise the two are
    independent.
    """
    center = StreamKey(run_id, iteration, Role.CENTER, sample_index)
    trial = StreamKey(run_id, iteration, Role.TRIAL, sample_index,
                      Role.CENTER if crn else None)
    return center, trial
