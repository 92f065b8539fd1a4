"""Elastic-cluster simulator.

Wraps the event kernel with the monitoring surface the controller needs:
request admission from workload traces, asymmetric provisioning delays for
scale-out vs scale-in, per-interval observations (arrivals, completions,
response-time stats, node count) and a CSV event log for debugging.
"""

from __future__ import annotations

import csv
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from fqlscale import kernel
from fqlscale.errors import SimulationError


@dataclass
class Request:
    """One queued unit of work; ``size`` drives the service time."""

    arrival_time: float
    size: int
    start_time: float = None
    completion_time: float = None


@dataclass(frozen=True)
class Observation:
    """Monitoring aggregate for one control interval ending at ``t``.

    ``rt_ms`` is the mean response time of the requests completed in the
    interval (0 with ``no_completions`` set when nothing finished);
    ``rts_ms`` keeps the per-request values for percentile reporting.
    """

    t: float
    w: int
    rt_ms: float
    rt_p95_ms: float
    th: int
    vm: int
    no_completions: bool
    rts_ms: tuple


@dataclass(frozen=True)
class DelayModel:
    """Enactment delay ranges (seconds), sampled uniformly per action."""

    scale_out_range: tuple = (480.0, 540.0)
    scale_in_range: tuple = (120.0, 180.0)

    def __post_init__(self):
        for name in ("scale_out_range", "scale_in_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not 0.0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < min <= max, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))

    def sample(self, delta: int, rng) -> float:
        lo, hi = self.scale_out_range if delta > 0 else self.scale_in_range
        return float(rng.uniform(lo, hi))


def service_time(n: int, per_unit_ms: float, base_ms: float = 0.0) -> float:
    """Service time in ms, affine in the request size."""
    if n < 0:
        raise ValueError(f"request size must be >= 0, got {n}")
    return base_ms + per_unit_ms * n


def nearest_rank_percentile(values, pct: float) -> float:
    """Nearest-rank percentile of a nonempty sequence (pct in (0, 100])."""
    ordered = sorted(values)
    rank = int(np.ceil(pct / 100.0 * len(ordered)))
    return ordered[max(rank, 1) - 1]


class Cluster:
    """One simulated cluster owned by a single experiment run."""

    def __init__(self, node_min=1, node_max=7, initial_nodes=1,
                 base_ms=50.0, per_unit_ms=10.0, delays: DelayModel = None,
                 rng=None, record_events: bool = False):
        self._core = kernel.EventCore(node_min, node_max, initial_nodes, record_events)
        self.delays = delays if delays is not None else DelayModel()
        self.base_ms = float(base_ms)
        self.per_unit_ms = float(per_unit_ms)
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._arrival_times = []
        self._completion_times = []
        self._completion_rids = []

    # -- monitoring surface -------------------------------------------------

    @property
    def now(self) -> float:
        return self._core.now

    @property
    def active_nodes(self) -> int:
        return self._core.active_nodes

    @property
    def queue_len(self) -> int:
        return self._core.queue_len

    @property
    def has_pending(self) -> bool:
        return self._core.has_pending

    @property
    def node_history(self):
        """(time, active_nodes) at start plus each enacted change."""
        return list(self._core.change_log)

    @property
    def events(self):
        return self._core.events

    # -- workload admission ---------------------------------------------------

    def inject(self, requests) -> None:
        """Admit requests (nondecreasing arrival times within the interval)."""
        for r in requests:
            self.inject_one(r.arrival_time, r.size)

    def inject_one(self, arrival_time: float, size: int) -> int:
        svc = service_time(size, self.per_unit_ms, self.base_ms) / 1000.0
        rid = self._core.add_request(float(arrival_time), svc, int(size))
        self._arrival_times.append(float(arrival_time))
        return rid

    def inject_arrays(self, times, sizes) -> None:
        """Fast path used by the run loop; same semantics as inject()."""
        for t, n in zip(times.tolist(), sizes.tolist()):
            self.inject_one(t, n)

    # -- scaling ---------------------------------------------------------------

    def schedule_scaling(self, delta: int) -> float:
        """Queue a node change after a sampled provisioning delay; returns
        the enact time. The enforcer must keep changes one at a time."""
        if delta == 0:
            raise SimulationError("delta must be nonzero")
        enact_at = self._core.now + self.delays.sample(delta, self._rng)
        self._core.schedule_change(int(delta), enact_at)
        return enact_at

    # -- time ----------------------------------------------------------------

    def advance(self, until: float):
        """Run the event loop to ``until``; returns completed Requests."""
        rids = self._core.advance(float(until))
        out = []
        for rid in rids:
            arrival, _svc, size, start, done = self._core.request_info(rid)
            self._completion_times.append(done)
            self._completion_rids.append(rid)
            out.append(Request(arrival, size, start, done))
        return out

    def observe(self, t0: float, t1: float) -> Observation:
        """Aggregate the interval [t0, t1): arrivals in [t0, t1), completions
        in (t0, t1], node count sampled at t1 (advance() must have run)."""
        w = bisect_left(self._arrival_times, t1) - bisect_left(self._arrival_times, t0)
        lo = bisect_right(self._completion_times, t0)
        hi = bisect_right(self._completion_times, t1)
        rts = []
        for i in range(lo, hi):
            rid = self._completion_rids[i]
            arrival, _svc, _size, _start, done = self._core.request_info(rid)
            rts.append((done - arrival) * 1000.0)
        if rts:
            mean_rt = sum(rts) / len(rts)
            p95 = nearest_rank_percentile(rts, 95.0)
        else:
            mean_rt = p95 = 0.0
        return Observation(
            t=t1, w=w, rt_ms=mean_rt, rt_p95_ms=p95, th=len(rts),
            vm=self._core.active_nodes, no_completions=not rts, rts_ms=tuple(rts),
        )

    # -- debugging -------------------------------------------------------------

    def export_event_log(self, path) -> None:
        """Write the event log as CSV (requires record_events=True)."""
        if self._core.events is None:
            raise SimulationError("event recording is disabled for this cluster")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "event_kind", "node_count", "queue_len", "request_id", "rt_ms"])
            for t, kind, nodes, qlen, rid, rt_ms in self._core.events:
                writer.writerow([repr(t), kind, nodes, qlen, rid,
                                 "" if rt_ms is None else repr(rt_ms)])
