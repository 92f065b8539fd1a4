"""Pure-Python event kernel for the cluster simulator.

Semantically identical to the compiled kernel in ``_core.pyx``; the two must
stay in lockstep (the test suite compares their event logs bit for bit).

State machine, all times in float seconds:
  * requests enter a FIFO queue at their arrival time and are dispatched to
    the lowest-index free node;
  * one node-count change may be pending; it takes effect at its enact time
    (scale-in removes idle nodes from the highest index down, then preempts
    the youngest busy nodes and requeues their requests at the queue front);
  * events at equal timestamps are ordered completions -> enactment ->
    arrivals -> dispatches.

Request conservation (arrived == completed + queued + in service) is checked
after every event and raises ConservationError on violation.
"""

from __future__ import annotations

from collections import deque

from fqlscale.errors import ConservationError, SimulationError

INF = float("inf")

EV_ARRIVE = "arrive"
EV_DISPATCH = "dispatch"
EV_COMPLETE = "complete"
EV_PREEMPT = "preempt"
EV_SCALE = "scale"


class EventCore:
    """Single cluster: FIFO queue, homogeneous nodes, delayed node changes."""

    def __init__(self, node_min: int, node_max: int, initial_nodes: int,
                 record_events: bool = False):
        if not 1 <= node_min <= initial_nodes <= node_max:
            raise SimulationError(
                f"need 1 <= node_min <= initial_nodes <= node_max, "
                f"got {node_min}/{initial_nodes}/{node_max}"
            )
        self.node_min = int(node_min)
        self.node_max = int(node_max)
        self.now = 0.0
        # per-node slots
        self._node_req = [-1] * initial_nodes
        self._node_completion = [INF] * initial_nodes
        self._node_start = [0.0] * initial_nodes
        # request store, indexed by rid
        self._arrival = []
        self._service = []
        self._size = []
        self._start = []
        self._done = []
        self._queue = deque()   # rids, FIFO by arrival
        self._staged = deque()  # injected but not yet arrived
        self._pending_delta = 0
        self._pending_enact = INF
        self.arrived = 0
        self.completed_count = 0
        self.busy = 0
        self.events = [] if record_events else None
        self.change_log = [(0.0, initial_nodes)]

    # -- bookkeeping ------------------------------------------------------

    @property
    def active_nodes(self) -> int:
        return len(self._node_req)

    @property
    def queue_len(self) -> int:
        return len(self._queue)

    @property
    def has_pending(self) -> bool:
        return self._pending_enact != INF

    @property
    def pending(self):
        if self._pending_enact == INF:
            return None
        return (self._pending_delta, self._pending_enact)

    def request_info(self, rid: int):
        """(arrival, service, size, start, completion); -1.0 marks unset."""
        return (self._arrival[rid], self._service[rid], self._size[rid],
                self._start[rid], self._done[rid])

    def _log(self, kind, rid, rt_ms):
        if self.events is not None:
            self.events.append(
                (self.now, kind, len(self._node_req), len(self._queue), rid, rt_ms)
            )

    def _check(self):
        if self.arrived != self.completed_count + len(self._queue) + self.busy:
            raise ConservationError(
                f"t={self.now}: arrived={self.arrived} != completed="
                f"{self.completed_count} + queued={len(self._queue)} + busy={self.busy}"
            )

    # -- admission --------------------------------------------------------

    def add_request(self, arrival: float, service: float, size: int) -> int:
        """Admit one request; arrivals must be fed in nondecreasing time order."""
        if arrival < self.now:
            raise SimulationError(f"arrival {arrival} before current time {self.now}")
        if self._staged and arrival < self._arrival[self._staged[-1]]:
            raise SimulationError("arrivals must be nondecreasing")
        if service < 0.0:
            raise SimulationError(f"negative service time {service}")
        rid = len(self._arrival)
        self._arrival.append(arrival)
        self._service.append(service)
        self._size.append(int(size))
        self._start.append(-1.0)
        self._done.append(-1.0)
        if arrival <= self.now:
            self._arrive(rid)
        else:
            self._staged.append(rid)
        return rid

    def _arrive(self, rid: int):
        self._queue.append(rid)
        self.arrived += 1
        self._log(EV_ARRIVE, rid, None)
        self._check()

    # -- scaling ----------------------------------------------------------

    def schedule_change(self, delta: int, enact_at: float):
        """Queue a node-count change; only one may be in flight."""
        if self._pending_enact != INF:
            raise SimulationError("a node change is already in flight")
        if delta == 0:
            raise SimulationError("delta must be nonzero")
        if enact_at < self.now:
            raise SimulationError(f"enact time {enact_at} before current time {self.now}")
        self._pending_delta = int(delta)
        self._pending_enact = float(enact_at)

    def _enact(self):
        delta = self._pending_delta
        self._pending_delta = 0
        self._pending_enact = INF
        active = len(self._node_req)
        target = min(max(active + delta, self.node_min), self.node_max)
        applied = target - active
        if applied > 0:
            for _ in range(applied):
                self._node_req.append(-1)
                self._node_completion.append(INF)
                self._node_start.append(0.0)
        else:
            for _ in range(-applied):
                victim = -1
                for idx in range(len(self._node_req)):  # highest idle index wins
                    if self._node_req[idx] == -1:
                        victim = idx
                if victim == -1:
                    # youngest busy node: latest start, ties to highest index
                    best_start = -INF
                    for idx in range(len(self._node_req)):
                        if self._node_start[idx] >= best_start:
                            best_start = self._node_start[idx]
                            victim = idx
                    rid = self._node_req[victim]
                    self._start[rid] = -1.0
                    self._queue.appendleft(rid)
                    self.busy -= 1
                    self._log(EV_PREEMPT, rid, None)
                del self._node_req[victim]
                del self._node_completion[victim]
                del self._node_start[victim]
        self.change_log.append((self.now, len(self._node_req)))
        self._log(EV_SCALE, -1, None)
        self._check()

    # -- event loop -------------------------------------------------------

    def _dispatch(self):
        while self._queue:
            free = -1
            for idx in range(len(self._node_req)):
                if self._node_req[idx] == -1:
                    free = idx
                    break
            if free == -1:
                return
            rid = self._queue.popleft()
            self._start[rid] = self.now
            self._node_req[free] = rid
            self._node_start[free] = self.now
            self._node_completion[free] = self.now + self._service[rid]
            self.busy += 1
            self._log(EV_DISPATCH, rid, None)
            self._check()

    def advance(self, until: float):
        """Process all events up to and including ``until``; returns the rids
        completed during this call, in completion order."""
        if until < self.now:
            raise SimulationError(f"cannot advance backwards to {until}")
        completed = []
        while True:
            self._dispatch()
            t_complete = INF
            for idx in range(len(self._node_req)):
                if self._node_completion[idx] < t_complete:
                    t_complete = self._node_completion[idx]
            t_enact = self._pending_enact
            t_arrive = self._arrival[self._staged[0]] if self._staged else INF
            t_next = min(t_complete, t_enact, t_arrive)
            if t_next > until:
                break
            self.now = t_next
            if t_complete == t_next:
                for idx in range(len(self._node_req)):
                    if self._node_completion[idx] == t_next:
                        rid = self._node_req[idx]
                        self._done[rid] = t_next
                        self._node_req[idx] = -1
                        self._node_completion[idx] = INF
                        self.busy -= 1
                        self.completed_count += 1
                        completed.append(rid)
                        self._log(EV_COMPLETE, rid, (t_next - self._arrival[rid]) * 1000.0)
                        self._check()
            if t_enact == t_next:
                self._enact()
            while self._staged and self._arrival[self._staged[0]] == t_next:
                self._arrive(self._staged.popleft())
        self.now = until
        return completed
