"""Run metrics: per-run report computation and cross-seed aggregation.

Reports are pure functions of archived logs: everything is recomputed from
the tick rows, per-request response times and run metadata, so `report`
invocations on saved logs reproduce the in-run numbers bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from statistics import median

from fqlscale.cluster import nearest_rank_percentile
from fqlscale.rewards import RewardWeights, SloConfig, utility


class _Obs:
    __slots__ = ("th", "vm", "rt_ms")

    def __init__(self, th, vm, rt_ms):
        self.th, self.vm, self.rt_ms = th, vm, rt_ms


@dataclass(frozen=True)
class ExperimentReport:
    """Table-row summary of one run (per-seed granularity)."""

    strategy: str
    pattern: str
    seed: int
    rt_p95_ms: float
    mean_vm: float
    node_changes: int     # sum of |enacted delta|
    action_count: int     # number of nonzero enacted actions
    convergence_step: int
    learning_steps: int
    cumulative_utility: float

    def as_dict(self) -> dict:
        return asdict(self)


def time_weighted_mean(history, duration_s: float) -> float:
    """Mean of a piecewise-constant (time, value) series over [0, duration]."""
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    total = 0.0
    for (t0, v), (t1, _) in zip(history, history[1:]):
        total += v * (min(t1, duration_s) - t0)
    t_last, v_last = history[-1]
    if t_last < duration_s:
        total += v_last * (duration_s - t_last)
    return total / duration_s


def compute_metrics(log) -> ExperimentReport:
    """Summarize one ExperimentLog (in memory or loaded from disk)."""
    if not log.rows:
        raise ValueError("cannot compute metrics for an empty log")
    meta = log.meta
    weights = RewardWeights(*meta["weights"])
    slo = SloConfig(meta["slo"]["rt_des_ms"], meta["slo"]["th_max"], meta["slo"]["vm_max"])
    rts = [rt for _t, rt in log.request_rts]
    rt_p95 = nearest_rank_percentile(rts, 95.0) if rts else 0.0
    cumulative = 0.0
    node_changes = 0
    action_count = 0
    for row in log.rows:
        cumulative += utility(_Obs(row["th"], row["vm"], row["rt_ms"]), weights, slo)
        delta = row["enforced_delta"]
        node_changes += abs(delta)
        action_count += delta != 0
    return ExperimentReport(
        strategy=meta["strategy"],
        pattern=meta["pattern"],
        seed=int(meta["seed"]),
        rt_p95_ms=rt_p95,
        mean_vm=time_weighted_mean(meta["node_history"], meta["duration_s"]),
        node_changes=node_changes,
        action_count=action_count,
        convergence_step=meta["convergence_step"],
        learning_steps=int(meta.get("learning_steps", 0)),
        cumulative_utility=cumulative,
    )


def audit_delayed_feedback(log) -> list:
    """Check the reward bookkeeping of an archived S1-S5 run.

    Every reward must equal U(resolve tick) - U(issue tick) of its own
    matched action, and at most one action may be awaiting feedback at any
    time. Returns a list of violation descriptions (empty when clean).
    The threshold baseline keeps no feedback records, so it is out of scope.
    """
    meta = log.meta
    weights = RewardWeights(*meta["weights"])
    slo = SloConfig(meta["slo"]["rt_des_ms"], meta["slo"]["th_max"], meta["slo"]["vm_max"])
    u = [utility(_Obs(r["th"], r["vm"], r["rt_ms"]), weights, slo) for r in log.rows]
    violations = []
    open_since = None
    for k, row in enumerate(log.rows):
        if row["reward"] is not None:
            if open_since is None:
                violations.append(f"t={row['t']}: reward with no action awaiting feedback")
            else:
                expected = u[k] - u[open_since]
                if abs(row["reward"] - expected) > 1e-12:
                    violations.append(
                        f"t={row['t']}: reward {row['reward']!r} != "
                        f"U(after) - U(before) = {expected!r}"
                    )
                open_since = None
        if row["enforced_delta"] != 0:
            if open_since is not None:
                violations.append(f"t={row['t']}: second action while one is in flight")
            open_since = k
    return violations


def aggregate_reports(reports) -> list:
    """Median per (strategy, pattern) cell across seeds, sorted for output.

    The convergence column is the median step over converged seeds, present
    only when more than half the seeds converged (and never for S4/S5/azure,
    whose per-run value is already absent).
    """
    cells = {}
    for rep in reports:
        cells.setdefault((rep.strategy, rep.pattern), []).append(rep)
    rows = []
    for (strategy, pattern), cell in sorted(cells.items()):
        conv = [r.convergence_step for r in cell if r.convergence_step is not None]
        rows.append({
            "strategy": strategy,
            "pattern": pattern,
            "seeds": len(cell),
            "rt_p95_ms": median(r.rt_p95_ms for r in cell),
            "mean_vm": median(r.mean_vm for r in cell),
            "node_changes": median(r.node_changes for r in cell),
            "convergence_step": median(conv) if len(conv) * 2 > len(cell) else None,
            "converged_fraction": len(conv) / len(cell),
            "cumulative_utility": median(r.cumulative_utility for r in cell),
        })
    return rows
