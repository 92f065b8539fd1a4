"""Fuzzy Q-learning over the rule base.

Each rule keeps one q-value per action. Action selection is epsilon-greedy
per fired rule; the temporal-difference update spreads the error over the
fired rules proportionally to their firing levels. Also home to the
exploration schedules, convergence tracking and plain-text table snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STRATEGY_KINDS = ("S1", "S2", "S3", "S4", "S5")


@dataclass(frozen=True)
class ChosenActions:
    """Per-rule selected action index plus the firing vector at selection."""

    actions: tuple
    firing: tuple

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        object.__setattr__(self, "firing", tuple(float(f) for f in self.firing))
        if len(self.actions) != len(self.firing):
            raise ValueError("one action index per rule required")


class QTable:
    """q[i, j] for rule i and action j, plus the learning constants."""

    def __init__(self, n_rules: int, actions, eta: float = 0.1, gamma: float = 0.8):
        if not 0.0 < eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {eta}")
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {gamma}")
        self.actions = tuple(int(a) for a in actions)
        if n_rules < 1 or not self.actions:
            raise ValueError("need at least one rule and one action")
        self.q = np.zeros((n_rules, len(self.actions)), dtype=np.float64)
        self.eta = float(eta)
        self.gamma = float(gamma)

    @property
    def n_rules(self) -> int:
        return self.q.shape[0]

    @property
    def n_actions(self) -> int:
        return self.q.shape[1]

    def copy(self) -> "QTable":
        other = QTable(self.n_rules, self.actions, self.eta, self.gamma)
        other.q[:] = self.q
        return other

    def _greedy(self, rule: int, rng) -> int:
        row = self.q[rule]
        best = row.max()
        ties = np.flatnonzero(row == best)
        if len(ties) == 1:
            return int(ties[0])
        return int(ties[rng.integers(len(ties))])

    def select_actions(self, firing, epsilon: float, rng) -> ChosenActions:
        """Epsilon-greedy pick per fired rule (greedy ties broken uniformly).

        Rules with zero firing get the greedy choice; they contribute nothing
        to the blended action or the update either way.
        """
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
        chosen = []
        for i, f in enumerate(firing):
            if f > 0.0 and rng.random() < epsilon:
                chosen.append(int(rng.integers(self.n_actions)))
            else:
                chosen.append(self._greedy(i, rng))
        return ChosenActions(tuple(chosen), tuple(firing))

    def q_of(self, chosen: ChosenActions) -> float:
        """Q(s, a): firing-weighted sum of the chosen cells."""
        total = 0.0
        for i, (a, f) in enumerate(zip(chosen.actions, chosen.firing)):
            total += f * self.q[i, a]
        return float(total)

    def value_of(self, firing_next) -> float:
        """V(s'): firing-weighted sum of the per-rule row maxima."""
        total = 0.0
        for i, f in enumerate(firing_next):
            total += f * self.q[i].max()
        return float(total)

    def update(self, chosen: ChosenActions, r: float, firing_next) -> float:
        """One TD step; returns the error signal dq.

        Only the chosen cell of each fired rule moves, by eta * dq * firing.
        """
        dq = r + self.gamma * self.value_of(firing_next) - self.q_of(chosen)
        for i, (a, f) in enumerate(zip(chosen.actions, chosen.firing)):
            if f > 0.0:
                self.q[i, a] += self.eta * dq * f
        return float(dq)

    def seed_knowledge(self, priors) -> "QTable":
        """Install prior q-values for (rule, action) pairs; others stay 0."""
        for rule, action, value in priors:
            if not (0 <= rule < self.n_rules and 0 <= action < self.n_actions):
                raise IndexError(f"prior ({rule}, {action}) out of range")
            self.q[rule, action] = float(value)
        return self

    def extract_policy(self) -> tuple:
        """Best action value per rule; ties go to the smallest |delta|."""
        out = []
        for row in self.q:
            best = row.max()
            candidates = [self.actions[k] for k in np.flatnonzero(row == best)]
            out.append(min(candidates, key=lambda a: (abs(a), a)))
        return tuple(out)


def save_snapshot(qt: QTable, path, *, strategy: str = "", steps: int = 0) -> None:
    """Write the table as plain text (metadata lines, then one row per rule)."""
    lines = [
        "# fqlscale q-table snapshot",
        "version 1",
        f"strategy {strategy}",
        f"eta {qt.eta!r}",
        f"gamma {qt.gamma!r}",
        f"steps {int(steps)}",
        "actions " + " ".join(str(a) for a in qt.actions),
        f"rules {qt.n_rules}",
    ]
    for row in qt.q:
        lines.append("row " + " ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_snapshot(path):
    """Read a snapshot; returns (QTable, meta dict with strategy/steps)."""
    meta = {"strategy": "", "steps": 0}
    eta = gamma = None
    actions = None
    n_rules = None
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "version":
            if rest.strip() != "1":
                raise ValueError(f"unsupported snapshot version {rest!r}")
        elif key == "strategy":
            meta["strategy"] = rest.strip()
        elif key == "eta":
            eta = float(rest)
        elif key == "gamma":
            gamma = float(rest)
        elif key == "steps":
            meta["steps"] = int(rest)
        elif key == "actions":
            actions = tuple(int(v) for v in rest.split())
        elif key == "rules":
            n_rules = int(rest)
        elif key == "row":
            rows.append([float(v) for v in rest.split()])
        else:
            raise ValueError(f"unknown snapshot line: {raw!r}")
    if None in (eta, gamma, actions, n_rules) or len(rows) != n_rules:
        raise ValueError("incomplete snapshot")
    qt = QTable(n_rules, actions, eta, gamma)
    qt.q[:] = np.asarray(rows, dtype=np.float64)
    return qt, meta


@dataclass(frozen=True)
class ExplorationStrategy:
    """Exploration schedule S1..S5.

    S1/S2 explore fully until first convergence, then drop to their
    post-convergence epsilon (0.2 / 0.0). S3 and S4 hold a constant rate;
    S5 is the fixed hand rule base with learning disabled.
    """

    kind: str
    initial_epsilon: float = None
    post_convergence_epsilon: float = None
    exploration_horizon: int = None

    _DEFAULTS = {
        "S1": (1.0, 0.2),
        "S2": (1.0, 0.0),
        "S3": (0.5, 0.5),
        "S4": (1.0, 1.0),
        "S5": (0.0, 0.0),
    }

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        init, post = self._DEFAULTS[self.kind]
        if self.initial_epsilon is None:
            object.__setattr__(self, "initial_epsilon", init)
        if self.post_convergence_epsilon is None:
            object.__setattr__(self, "post_convergence_epsilon", post)
        for name in ("initial_epsilon", "post_convergence_epsilon"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        if self.kind == "S5" and (self.initial_epsilon != 0.0 or self.post_convergence_epsilon != 0.0):
            raise ValueError("S5 has epsilon fixed at 0")

    @property
    def learns(self) -> bool:
        return self.kind != "S5"


class ConvergenceMonitor:
    """Flags the first learning step after `window` consecutive steps whose
    largest q-cell change stayed below `tolerance`."""

    def __init__(self, tolerance: float = 1e-3, window: int = 10):
        if tolerance <= 0 or window < 1:
            raise ValueError("tolerance must be > 0, window >= 1")
        self.tolerance = float(tolerance)
        self.window = int(window)
        self.converged_at = None
        self._streak = 0

    def observe(self, max_cell_change: float, step: int) -> bool:
        """Feed one learning step's largest q-cell change; returns converged."""
        if abs(max_cell_change) < self.tolerance:
            self._streak += 1
        else:
            self._streak = 0
        if self.converged_at is None and self._streak >= self.window:
            self.converged_at = int(step)
        return self.converged_at is not None


def epsilon_schedule(strategy: ExplorationStrategy, step: int, monitor: ConvergenceMonitor) -> float:
    """Exploration rate for the given learning step under the strategy."""
    if strategy.kind in ("S3", "S4", "S5"):
        return strategy.initial_epsilon
    switched = monitor is not None and monitor.converged_at is not None
    if strategy.exploration_horizon is not None and step >= strategy.exploration_horizon:
        switched = True
    return strategy.post_convergence_epsilon if switched else strategy.initial_epsilon
