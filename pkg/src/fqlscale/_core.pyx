# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event kernel for the cluster simulator.

Semantic twin of ``fqlscale._pycore`` (see its docstring for the state
machine and event-ordering contract). Any behavioural change must land in
both; the test suite compares their event logs bit for bit. Arithmetic here
is limited to float additions and comparisons, and the extension is built
with -ffp-contract=off, so results are identical to the pure-Python kernel.
"""

from libc.stdlib cimport free, malloc, realloc

from fqlscale.errors import ConservationError, SimulationError

cdef double INF = float("inf")

EV_ARRIVE = "arrive"
EV_DISPATCH = "dispatch"
EV_COMPLETE = "complete"
EV_PREEMPT = "preempt"
EV_SCALE = "scale"


cdef class EventCore:
    """Single cluster: FIFO queue, homogeneous nodes, delayed node changes."""

    cdef public int node_min, node_max
    cdef public double now
    # node slots (capacity node_max)
    cdef long* _node_req
    cdef double* _node_completion
    cdef double* _node_start
    cdef int _n_nodes
    # request store, indexed by rid
    cdef double* _arr
    cdef double* _svc
    cdef long* _sz
    cdef double* _st
    cdef double* _dn
    cdef long _n_req, _cap_req
    # FIFO queue and staged arrivals, as ring buffers of rids
    cdef long* _queue
    cdef long _q_head, _q_len, _q_cap
    cdef long* _staged
    cdef long _s_head, _s_len, _s_cap
    cdef int _pending_delta
    cdef double _pending_enact
    cdef public long arrived, completed_count, busy
    cdef public object events
    cdef public object change_log

    def __cinit__(self, int node_min, int node_max, int initial_nodes,
                  bint record_events=False):
        if not 1 <= node_min <= initial_nodes <= node_max:
            raise SimulationError(
                f"need 1 <= node_min <= initial_nodes <= node_max, "
                f"got {node_min}/{initial_nodes}/{node_max}"
            )
        self.node_min = node_min
        self.node_max = node_max
        self.now = 0.0
        self._node_req = <long*>malloc(node_max * sizeof(long))
        self._node_completion = <double*>malloc(node_max * sizeof(double))
        self._node_start = <double*>malloc(node_max * sizeof(double))
        self._n_nodes = initial_nodes
        cdef int i
        for i in range(initial_nodes):
            self._node_req[i] = -1
            self._node_completion[i] = INF
            self._node_start[i] = 0.0
        self._cap_req = 1024
        self._arr = <double*>malloc(self._cap_req * sizeof(double))
        self._svc = <double*>malloc(self._cap_req * sizeof(double))
        self._sz = <long*>malloc(self._cap_req * sizeof(long))
        self._st = <double*>malloc(self._cap_req * sizeof(double))
        self._dn = <double*>malloc(self._cap_req * sizeof(double))
        self._n_req = 0
        self._q_cap = 256
        self._queue = <long*>malloc(self._q_cap * sizeof(long))
        self._q_head = 0
        self._q_len = 0
        self._s_cap = 256
        self._staged = <long*>malloc(self._s_cap * sizeof(long))
        self._s_head = 0
        self._s_len = 0
        self._pending_delta = 0
        self._pending_enact = INF
        self.arrived = 0
        self.completed_count = 0
        self.busy = 0
        self.events = [] if record_events else None
        self.change_log = [(0.0, initial_nodes)]

    def __dealloc__(self):
        free(self._node_req)
        free(self._node_completion)
        free(self._node_start)
        free(self._arr)
        free(self._svc)
        free(self._sz)
        free(self._st)
        free(self._dn)
        free(self._queue)
        free(self._staged)

    # -- ring-buffer helpers ------------------------------------------------

    cdef void _q_grow(self):
        cdef long* fresh = <long*>malloc(2 * self._q_cap * sizeof(long))
        cdef long i
        for i in range(self._q_len):
            fresh[i] = self._queue[(self._q_head + i) % self._q_cap]
        free(self._queue)
        self._queue = fresh
        self._q_head = 0
        self._q_cap *= 2

    cdef void _q_push(self, long rid):
        if self._q_len == self._q_cap:
            self._q_grow()
        self._queue[(self._q_head + self._q_len) % self._q_cap] = rid
        self._q_len += 1

    cdef void _q_push_front(self, long rid):
        if self._q_len == self._q_cap:
            self._q_grow()
        self._q_head = (self._q_head - 1 + self._q_cap) % self._q_cap
        self._queue[self._q_head] = rid
        self._q_len += 1

    cdef long _q_pop(self):
        cdef long rid = self._queue[self._q_head]
        self._q_head = (self._q_head + 1) % self._q_cap
        self._q_len -= 1
        return rid

    cdef void _s_push(self, long rid):
        cdef long* fresh
        cdef long i
        if self._s_len == self._s_cap:
            fresh = <long*>malloc(2 * self._s_cap * sizeof(long))
            for i in range(self._s_len):
                fresh[i] = self._staged[(self._s_head + i) % self._s_cap]
            free(self._staged)
            self._staged = fresh
            self._s_head = 0
            self._s_cap *= 2
        self._staged[(self._s_head + self._s_len) % self._s_cap] = rid
        self._s_len += 1

    cdef long _s_peek(self):
        return self._staged[self._s_head]

    cdef long _s_pop(self):
        cdef long rid = self._staged[self._s_head]
        self._s_head = (self._s_head + 1) % self._s_cap
        self._s_len -= 1
        return rid

    # -- bookkeeping ----------------------------------------------------------

    @property
    def active_nodes(self):
        return self._n_nodes

    @property
    def queue_len(self):
        return self._q_len

    @property
    def has_pending(self):
        return self._pending_enact != INF

    @property
    def pending(self):
        if self._pending_enact == INF:
            return None
        return (self._pending_delta, self._pending_enact)

    def request_info(self, long rid):
        """(arrival, service, size, start, completion); -1.0 marks unset."""
        if rid < 0 or rid >= self._n_req:
            raise IndexError(f"no request {rid}")
        return (self._arr[rid], self._svc[rid], self._sz[rid],
                self._st[rid], self._dn[rid])

    cdef void _log(self, object kind, long rid, object rt_ms):
        if self.events is not None:
            self.events.append(
                (self.now, kind, self._n_nodes, self._q_len, rid, rt_ms)
            )

    cdef int _check(self) except -1:
        if self.arrived != self.completed_count + self._q_len + self.busy:
            raise ConservationError(
                f"t={self.now}: arrived={self.arrived} != completed="
                f"{self.completed_count} + queued={self._q_len} + busy={self.busy}"
            )
        return 0

    # -- admission --------------------------------------------------------------

    def add_request(self, double arrival, double service, long size):
        """Admit one request; arrivals must be fed in nondecreasing time order."""
        if arrival < self.now:
            raise SimulationError(f"arrival {arrival} before current time {self.now}")
        if self._s_len > 0 and arrival < self._arr[self._staged[(self._s_head + self._s_len - 1) % self._s_cap]]:
            raise SimulationError("arrivals must be nondecreasing")
        if service < 0.0:
            raise SimulationError(f"negative service time {service}")
        cdef long rid = self._n_req
        if self._n_req == self._cap_req:
            self._cap_req *= 2
            self._arr = <double*>realloc(self._arr, self._cap_req * sizeof(double))
            self._svc = <double*>realloc(self._svc, self._cap_req * sizeof(double))
            self._sz = <long*>realloc(self._sz, self._cap_req * sizeof(long))
            self._st = <double*>realloc(self._st, self._cap_req * sizeof(double))
            self._dn = <double*>realloc(self._dn, self._cap_req * sizeof(double))
        self._arr[rid] = arrival
        self._svc[rid] = service
        self._sz[rid] = size
        self._st[rid] = -1.0
        self._dn[rid] = -1.0
        self._n_req += 1
        if arrival <= self.now:
            self._arrive(rid)
        else:
            self._s_push(rid)
        return rid

    cdef int _arrive(self, long rid) except -1:
        self._q_push(rid)
        self.arrived += 1
        self._log(EV_ARRIVE, rid, None)
        self._check()
        return 0

    # -- scaling ----------------------------------------------------------------

    def schedule_change(self, int delta, double enact_at):
        """Queue a node-count change; only one may be in flight."""
        if self._pending_enact != INF:
            raise SimulationError("a node change is already in flight")
        if delta == 0:
            raise SimulationError("delta must be nonzero")
        if enact_at < self.now:
            raise SimulationError(f"enact time {enact_at} before current time {self.now}")
        self._pending_delta = delta
        self._pending_enact = enact_at

    cdef int _enact(self) except -1:
        cdef int delta = self._pending_delta
        self._pending_delta = 0
        self._pending_enact = INF
        cdef int active = self._n_nodes
        cdef int target = active + delta
        if target < self.node_min:
            target = self.node_min
        if target > self.node_max:
            target = self.node_max
        cdef int applied = target - active
        cdef int k, idx, victim
        cdef double best_start
        cdef long rid
        if applied > 0:
            for k in range(applied):
                self._node_req[self._n_nodes] = -1
                self._node_completion[self._n_nodes] = INF
                self._node_start[self._n_nodes] = 0.0
                self._n_nodes += 1
        else:
            for k in range(-applied):
                victim = -1
                for idx in range(self._n_nodes):  # highest idle index wins
                    if self._node_req[idx] == -1:
                        victim = idx
                if victim == -1:
                    # youngest busy node: latest start, ties to highest index
                    best_start = -INF
                    for idx in range(self._n_nodes):
                        if self._node_start[idx] >= best_start:
                            best_start = self._node_start[idx]
                            victim = idx
                    rid = self._node_req[victim]
                    self._st[rid] = -1.0
                    self._q_push_front(rid)
                    self.busy -= 1
                    self._log(EV_PREEMPT, rid, None)
                for idx in range(victim, self._n_nodes - 1):
                    self._node_req[idx] = self._node_req[idx + 1]
                    self._node_completion[idx] = self._node_completion[idx + 1]
                    self._node_start[idx] = self._node_start[idx + 1]
                self._n_nodes -= 1
        self.change_log.append((self.now, self._n_nodes))
        self._log(EV_SCALE, -1, None)
        self._check()
        return 0

    # -- event loop ---------------------------------------------------------------

    cdef int _dispatch(self) except -1:
        cdef int idx, free_idx
        cdef long rid
        while self._q_len > 0:
            free_idx = -1
            for idx in range(self._n_nodes):
                if self._node_req[idx] == -1:
                    free_idx = idx
                    break
            if free_idx == -1:
                return 0
            rid = self._q_pop()
            self._st[rid] = self.now
            self._node_req[free_idx] = rid
            self._node_start[free_idx] = self.now
            self._node_completion[free_idx] = self.now + self._svc[rid]
            self.busy += 1
            self._log(EV_DISPATCH, rid, None)
            self._check()
        return 0

    def advance(self, double until):
        """Process all events up to and including ``until``; returns the rids
        completed during this call, in completion order."""
        if until < self.now:
            raise SimulationError(f"cannot advance backwards to {until}")
        completed = []
        cdef double t_complete, t_next
        cdef int idx
        cdef long rid
        while True:
            self._dispatch()
            t_complete = INF
            for idx in range(self._n_nodes):
                if self._node_completion[idx] < t_complete:
                    t_complete = self._node_completion[idx]
            t_next = t_complete
            if self._pending_enact < t_next:
                t_next = self._pending_enact
            if self._s_len > 0 and self._arr[self._s_peek()] < t_next:
                t_next = self._arr[self._s_peek()]
            if t_next > until:
                break
            self.now = t_next
            if t_complete == t_next:
                for idx in range(self._n_nodes):
                    if self._node_completion[idx] == t_next:
                        rid = self._node_req[idx]
                        self._dn[rid] = t_next
                        self._node_req[idx] = -1
                        self._node_completion[idx] = INF
                        self.busy -= 1
                        self.completed_count += 1
                        completed.append(rid)
                        self._log(EV_COMPLETE, rid, (t_next - self._arr[rid]) * 1000.0)
                        self._check()
            if self._pending_enact == t_next:
                self._enact()
            while self._s_len > 0 and self._arr[self._s_peek()] == t_next:
                self._arrive(self._s_pop())
        self.now = until
        return completed
