"""Ambulance base placement: a discrete-event simulation with a pathwise (IPA) gradient.

Calls arrive as a Poisson process, uniformly over a square region.  Each
base houses one ambulance.  A call is served by the nearest idle ambulance
(Euclidean distance from its home base); if every unit is out, the call
waits in a FIFO queue.  A unit drives to the call, spends an exponential
service time on scene, drives home and only then becomes available again.

The decision vector holds the coordinates of the movable bases.  Every time
quantity is carried as a :class:`Dual4` so the mean response time comes with
its derivative along the sample path, holding dispatch and queue decisions
fixed.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from ..rng import Substream
from .base import OracleError, StochasticOracle

log = logging.getLogger(__name__)

_DRAWS_PER_CALL = 4  # interarrival, x, y, service


@dataclass(frozen=True)
class AmbulanceSimConfig:
    fixed_bases: tuple = ((5.0, 5.0), (5.0, 15.0), (15.0, 15.0))
    n_var_bases: int = 2
    region: float = 20.0
    arrival_rate: float = 0.2
    mean_service: float = 10.0
    speed: float = 2.0
    horizon: float = 500.0
    warmup: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "fixed_bases", tuple(tuple(map(float, b)) for b in self.fixed_bases))
        if self.n_var_bases < 1:
            raise ValueError("need at least one movable base")
        if min(self.region, self.arrival_rate, self.mean_service, self.speed, self.horizon) <= 0:
            raise ValueError("region, rates and times must be positive")
        if not 0 <= self.warmup < self.horizon:
            raise ValueError("warmup must lie in [0, horizon)")
        if any(len(b) != 2 for b in self.fixed_bases):
            raise ValueError("fixed bases must be 2-D points")

    @property
    def dim(self) -> int:
        return 2 * self.n_var_bases


class Dual4:
    """Value with a gradient vector; ``+``, ``-`` and scaling propagate exactly.

    Comparisons look only at the value, which is how branch decisions are
    frozen along a sample path.
    """

    __slots__ = ("value", "grad")

    def __init__(self, value: float, grad):
        self.value = float(value)
        self.grad = grad

    @classmethod
    def const(cls, value: float, dim: int) -> "Dual4":
        return cls(value, np.zeros(dim))

    def __add__(self, other):
        if isinstance(other, Dual4):
            return Dual4(self.value + other.value, self.grad + other.grad)
        return Dual4(self.value + other, self.grad)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual4):
            return Dual4(self.value - other.value, self.grad - other.grad)
        return Dual4(self.value - other, self.grad)

    def __rsub__(self, other):
        return Dual4(other - self.value, -self.grad)

    def __mul__(self, c: float):
        return Dual4(self.value * c, self.grad * c)

    __rmul__ = __mul__

    def __truediv__(self, c: float):
        return Dual4(self.value / c, self.grad / c)

    def __lt__(self, other):
        return self.value < (other.value if isinstance(other, Dual4) else other)

    def __le__(self, other):
        return self.value <= (other.value if isinstance(other, Dual4) else other)

    def __repr__(self):
        return f"Dual4({self.value!r}, {self.grad!r})"


class EventKind(IntEnum):
    # value order is the tie-break order at equal times
    RETURN = 0
    SERVICE = 1
    ARRIVAL = 2


@dataclass(order=True)
class SimEvent:
    time: float
    kind: EventKind
    seq: int
    ident: int = field(compare=False)


@dataclass
class CallRecord:
    call: int
    arrival: float
    dispatch: float
    unit: int
    travel: float
    min_travel: float
    response: float


@dataclass
class SimLog:
    event_times: list = field(default_factory=list)
    enqueued: list = field(default_factory=list)
    dequeued: list = field(default_factory=list)
    calls: list = field(default_factory=list)


@dataclass
class SimResult:
    avg_response: float
    grad: np.ndarray
    n_arrivals: int
    n_dispatched: int
    n_counted: int
    n_queued_end: int
    clamped: bool = False
    log: SimLog | None = None


def draw_calls(stream: Substream, cfg: AmbulanceSimConfig) -> np.ndarray:
    """Rows (arrival time, x, y, service) for every call up to the horizon."""
    expected = cfg.arrival_rate * cfg.horizon
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    rows, t = [], 0.0
    while True:
        u = stream.uniforms(_DRAWS_PER_CALL * chunk).reshape(chunk, _DRAWS_PER_CALL)
        times = t + np.cumsum(-np.log1p(-u[:, 0]) / cfg.arrival_rate)
        block = np.column_stack([times, u[:, 1] * cfg.region, u[:, 2] * cfg.region,
                                 -cfg.mean_service * np.log1p(-u[:, 3])])
        inside = times <= cfg.horizon
        rows.append(block[inside])
        if not inside[-1]:
            return np.vstack(rows)
        t = times[-1]


def _bases(var_bases, cfg):
    x = np.asarray(var_bases, dtype=float).ravel()
    if x.size != cfg.dim:
        raise OracleError(f"expected {cfg.dim} coordinates, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise OracleError("non-finite base coordinates")
    xc = np.clip(x, 0.0, cfg.region)
    live = xc == x
    if not live.all():
        log.debug("movable bases clamped to the region at coordinates %s", np.flatnonzero(~live))
    pos = [np.array(b) for b in cfg.fixed_bases]
    jac = [None] * len(cfg.fixed_bases)
    for i in range(cfg.n_var_bases):
        pos.append(xc[2 * i:2 * i + 2])
        jac.append((2 * i, live[2 * i:2 * i + 2]))
    return pos, jac, not live.all()


def ambulance_simulate(var_bases, cfg: AmbulanceSimConfig = AmbulanceSimConfig(),
                       stream: Substream | None = None, calls=None, record: bool = False) -> SimResult:
    """One replication.  ``calls`` (rows of arrival, x, y, service) overrides the stream."""
    if calls is None:
        if stream is None:
            raise OracleError("need a stream or an explicit call list")
        calls = draw_calls(stream, cfg)
    calls = np.asarray(calls, dtype=float).reshape(-1, 4)
    if calls.shape[0] == 0:
        raise OracleError("no calls within the horizon; increase horizon or arrival_rate")

    dim = cfg.dim
    pos, jac, clamped = _bases(var_bases, cfg)
    n_units = len(pos)
    diff = np.stack([calls[:, 1:3] - p for p in pos])      # (unit, call, 2)
    dist = np.linalg.norm(diff, axis=2)                     # (unit, call)

    def travel(j, i) -> Dual4:
        g = np.zeros(dim)
        if jac[j] is not None and dist[j, i] > 0:
            col, live = jac[j]
            g[col:col + 2] = np.where(live, -diff[j, i] / dist[j, i], 0.0)
        return Dual4(dist[j, i], g) / cfg.speed

    free = [True] * n_units
    queue: deque[int] = deque()
    heap: list[SimEvent] = [SimEvent(calls[i, 0], EventKind.ARRIVAL, i, i) for i in range(len(calls))]
    heapq.heapify(heap)
    seq = len(calls)
    ret_time: list[Dual4 | None] = [None] * n_units
    total = Dual4.const(0.0, dim)
    counted = dispatched = 0
    slog = SimLog() if record else None

    def dispatch(i, j, t: Dual4):
        nonlocal seq, total, counted, dispatched
        tr = travel(j, i)
        response = t - calls[i, 0] + tr
        done = t + tr + calls[i, 3]
        ret_time[j] = done + tr
        free[j] = False
        heapq.heappush(heap, SimEvent(done.value, EventKind.SERVICE, seq, j))
        heapq.heappush(heap, SimEvent(ret_time[j].value, EventKind.RETURN, seq + 1, j))
        seq += 2
        dispatched += 1
        if t.value >= cfg.warmup:
            total = total + response
            counted += 1
        if slog is not None:
            slog.calls.append(CallRecord(i, calls[i, 0], t.value, j, tr.value,
                                         float(dist[:, i].min()) / cfg.speed, response.value))

    while heap and heap[0].time <= cfg.horizon:
        ev = heapq.heappop(heap)
        if slog is not None:
            slog.event_times.append(ev.time)
        if ev.kind == EventKind.ARRIVAL:
            idle = [j for j in range(n_units) if free[j]]
            if idle:
                j = min(idle, key=lambda u: dist[u, ev.ident])
                dispatch(ev.ident, j, Dual4.const(calls[ev.ident, 0], dim))
            else:
                queue.append(ev.ident)
                if slog is not None:
                    slog.enqueued.append(ev.ident)
        elif ev.kind == EventKind.RETURN:
            free[ev.ident] = True
            if queue:
                i = queue.popleft()
                if slog is not None:
                    slog.dequeued.append(i)
                dispatch(i, ev.ident, ret_time[ev.ident])
        # SERVICE completion only starts the drive home; nothing to update

    if queue:
        log.debug("%d calls still queued at the horizon", len(queue))
    if counted == 0:
        raise OracleError("no calls dispatched after warmup; increase horizon")
    avg = total / counted
    return SimResult(avg.value, avg.grad, len(calls), dispatched, counted, len(queue), clamped, slog)


def check_integrity(res: SimResult, tol: float = 1e-9) -> dict[str, int]:
    """Count violations of event ordering, FIFO service, call conservation and travel bounds."""
    lg = res.log
    if lg is None:
        raise ValueError("simulate with record=True to check integrity")
    times = np.asarray(lg.event_times)
    out = {
        "time_order": int(np.sum(np.diff(times) < 0)) if times.size > 1 else 0,
        "fifo": int(lg.dequeued != lg.enqueued[:len(lg.dequeued)]),
        "conservation": int(res.n_arrivals != res.n_dispatched + res.n_queued_end),
        "travel_bound": 0,
    }
    for c in lg.calls:
        if c.response < c.travel - tol or c.travel < c.min_travel - tol or c.dispatch < c.arrival - tol:
            out["travel_bound"] += 1
    return out


class AmbulanceOracle(StochasticOracle):
    """One simulation replication per sample: F is the mean response, G its IPA gradient."""

    name = "ambulance"

    def __init__(self, cfg: AmbulanceSimConfig = AmbulanceSimConfig()):
        self.cfg = cfg
        self.dim = cfg.dim

    def sample(self, x, stream: Substream):
        res = ambulance_simulate(x, self.cfg, stream)
        return res.avg_response, res.grad
