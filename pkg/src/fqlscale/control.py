"""Scaling control loop.

Each control tick monitors one interval, fuzzifies the observation, picks
per-rule actions (or uses the fixed hand rules), defuzzifies, clamps the
result through the policy enforcer and, when a nonzero change is allowed,
schedules it on the cluster and opens a feedback record. The matching reward
is the utility difference observed after the change is enacted and settled;
only then does a learning update run and a new action become possible.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path

from fqlscale import fuzzy, learning, rewards
from fqlscale.errors import SimulationError


@dataclass(frozen=True)
class EnforcerConfig:
    """Node bounds plus the stable-mode flag (block while a change is in flight)."""

    node_min: int = 1
    node_max: int = 7
    block_in_flight: bool = True

    def __post_init__(self):
        if not 1 <= self.node_min <= self.node_max:
            raise ValueError(f"need 1 <= node_min <= node_max, got {self}")


def enforce(desired_delta: int, current_nodes: int, cfg: EnforcerConfig,
            in_flight: bool) -> int:
    """Clamp the controller output into the node bounds; 0 while in flight."""
    if in_flight and cfg.block_in_flight:
        return 0
    target = min(max(current_nodes + desired_delta, cfg.node_min), cfg.node_max)
    return target - current_nodes


@dataclass
class PendingFeedback:
    """An enacted scaling action waiting for its delayed reward."""

    chosen: learning.ChosenActions
    q_at_selection: float
    issued_at: float
    enacted_at: float
    utility_before: float


@dataclass(frozen=True)
class TickResult:
    t: float
    raw_delta: int
    enforced_delta: int
    epsilon: float
    reward: float
    dq: float
    utility: float


class ScalingController:
    """Fuzzy scaler with online consequent learning (strategies S1-S5)."""

    def __init__(self, partitions, rules: fuzzy.RuleBase, qtable: learning.QTable,
                 strategy: learning.ExplorationStrategy, monitor: learning.ConvergenceMonitor,
                 enforcer: EnforcerConfig, weights: rewards.RewardWeights,
                 slo: rewards.SloConfig, rng, settle_s: float):
        if strategy.kind == "S5" and rules.consequents is None:
            raise ValueError("S5 needs fixed rule consequents")
        fuzzy.validate_rule_grid(rules, partitions)
        if qtable.n_rules != rules.n_rules or qtable.actions != rules.actions:
            raise ValueError("q-table shape does not match the rule base")
        self.partitions = tuple(partitions)
        self.rules = rules
        self.qtable = qtable
        self.strategy = strategy
        self.monitor = monitor
        self.enforcer = enforcer
        self.weights = weights
        self.slo = slo
        self.rng = rng
        self.settle_s = float(settle_s)
        self.pending = None
        self.steps = 0          # learning steps == rewards received
        self.audit = []         # (issued_at, resolved_at, u_before, u_after, reward)

    def _firing(self, obs):
        return fuzzy.fuzzify((obs.w, obs.rt_ms), self.partitions, self.rules)

    def _decide(self, firing):
        """Raw node delta for this tick; returns (delta, chosen, epsilon)."""
        if self.strategy.kind == "S5":
            delta = fuzzy.defuzzify(firing, self.rules.consequents, self.rules.actions)
            return delta, None, 0.0
        eps = learning.epsilon_schedule(self.strategy, self.steps, self.monitor)
        chosen = self.qtable.select_actions(firing, eps, self.rng)
        values = [self.qtable.actions[a] for a in chosen.actions]
        return fuzzy.defuzzify(firing, values, self.rules.actions), chosen, eps

    def _resolve(self, obs, u_now: float):
        """Close the open feedback with the reward observed at this tick."""
        pf = self.pending
        if pf is None:
            raise SimulationError("no feedback to resolve")
        r = rewards.reward(u_now, pf.utility_before)
        dq = None
        if self.strategy.learns:
            firing_next = self._firing(obs)
            dq = self.qtable.update(pf.chosen, r, firing_next)
            max_change = self.qtable.eta * abs(dq) * max(pf.chosen.firing)
            self.steps += 1
            self.monitor.observe(max_change, self.steps)
            self.audit.append((pf.issued_at, obs.t, pf.utility_before, u_now, r))
        self.pending = None
        return r, dq

    def tick(self, obs, env) -> TickResult:
        """One MAPE pass for the interval ending at obs.t."""
        u = rewards.utility(obs, self.weights, self.slo)
        r_val = dq_val = None
        if self.pending is not None and obs.t >= self.pending.enacted_at + self.settle_s:
            r_val, dq_val = self._resolve(obs, u)
        firing = self._firing(obs)
        raw, chosen, eps = self._decide(firing)
        allowed = enforce(raw, obs.vm, self.enforcer, self.pending is not None)
        if allowed != 0:
            enact_at = env.schedule_scaling(allowed)
            q_sel = self.qtable.q_of(chosen) if chosen is not None else 0.0
            self.pending = PendingFeedback(chosen, q_sel, obs.t, enact_at, u)
        return TickResult(obs.t, raw, allowed, eps, r_val, dq_val, u)

    def consequents(self):
        """Current rule consequents: learned policy, or the hand rules for S5."""
        if self.strategy.kind == "S5":
            return self.rules.consequents
        return self.qtable.extract_policy()


TICK_COLUMNS = ("t", "w", "rt_ms", "th", "vm", "raw_delta", "enforced_delta",
                "epsilon", "reward", "dq")


@dataclass
class ExperimentLog:
    """Per-tick rows, per-request response times and run metadata."""

    rows: list
    request_rts: list  # (completion time, rt_ms)
    meta: dict

    def save(self, out_dir, stem: str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{stem}.ticks.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TICK_COLUMNS)
            for row in self.rows:
                writer.writerow([_fmt(row[c]) for c in TICK_COLUMNS])
        with open(out / f"{stem}.requests.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_completed", "rt_ms"])
            for t, rt in self.request_rts:
                writer.writerow([repr(t), repr(rt)])
        with open(out / f"{stem}.meta.json", "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, out_dir, stem: str) -> "ExperimentLog":
        out = Path(out_dir)
        rows = []
        with open(out / f"{stem}.ticks.csv", newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append({
                    "t": float(rec["t"]), "w": int(rec["w"]), "rt_ms": float(rec["rt_ms"]),
                    "th": int(rec["th"]), "vm": int(rec["vm"]),
                    "raw_delta": int(rec["raw_delta"]), "enforced_delta": int(rec["enforced_delta"]),
                    "epsilon": _parse(rec["epsilon"]), "reward": _parse(rec["reward"]),
                    "dq": _parse(rec["dq"]),
                })
        request_rts = []
        with open(out / f"{stem}.requests.csv", newline="") as fh:
            for rec in csv.DictReader(fh):
                request_rts.append((float(rec["t_completed"]), float(rec["rt_ms"])))
        meta = json.loads((out / f"{stem}.meta.json").read_text())
        return cls(rows, request_rts, meta)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _parse(s):
    return None if s == "" else float(s)


def run_loop(env, controller, trace, batches, weights, slo, meta_extra=None) -> ExperimentLog:
    """Drive controller and cluster through the trace; returns the full log.

    ``batches`` yields (interval_index, arrival_times, sizes) as produced by
    workloads.arrival_batches.
    """
    dt = trace.interval_s
    rows = []
    request_rts = []
    for k, times, sizes in batches:
        t0, t1 = k * dt, (k + 1) * dt
        env.inject_arrays(times, sizes)
        completed = env.advance(t1)
        for req in completed:
            request_rts.append((req.completion_time,
                                (req.completion_time - req.arrival_time) * 1000.0))
        obs = env.observe(t0, t1)
        res = controller.tick(obs, env)
        rows.append({
            "t": obs.t, "w": obs.w, "rt_ms": obs.rt_ms, "th": obs.th, "vm": obs.vm,
            "raw_delta": res.raw_delta, "enforced_delta": res.enforced_delta,
            "epsilon": res.epsilon, "reward": res.reward, "dq": res.dq,
        })
    discarded = getattr(controller, "pending", None) is not None
    meta = {
        "interval_s": dt,
        "n_ticks": len(rows),
        "weights": [weights.w1, weights.w2, weights.w3],
        "slo": {"rt_des_ms": slo.rt_des_ms, "th_max": slo.th_max, "vm_max": slo.vm_max},
        "node_history": [[t, n] for t, n in env.node_history],
        "duration_s": len(rows) * dt,
        "discarded_pending": discarded,
        "learning_steps": getattr(controller, "steps", 0),
    }
    monitor = getattr(controller, "monitor", None)
    strategy = getattr(controller, "strategy", None)
    meta["monitor_converged_at"] = monitor.converged_at if monitor is not None else None
    # Reported convergence exists only for the learning strategies that can
    # stop exploring; S4/S5/threshold runs report it absent.
    if strategy is not None and strategy.kind in ("S1", "S2", "S3"):
        meta["convergence_step"] = monitor.converged_at
    else:
        meta["convergence_step"] = None
    if hasattr(controller, "consequents"):
        meta["consequents"] = list(controller.consequents())
    if meta_extra:
        meta.update(meta_extra)
    return ExperimentLog(rows, request_rts, meta)
