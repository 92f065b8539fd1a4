"""Fuzzy inference for the scaling controller.

Inputs (workload, response time) are partitioned into overlapping linguistic
sets whose membership degrees sum to one everywhere (Ruspini partitions).
Rules pair one set per input with an integer node-delta consequent; rule
firing uses the product conjunction, and the crisp output is the firing-
weighted average of the consequents rounded to the nearest integer.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

RUSPINI_TOL = 1e-12


class PartitionError(ValueError):
    """Membership functions do not form a valid partition or rule base."""


def round_half_away_from_zero(x: float) -> int:
    """Nearest integer with .5 ties away from zero (+1.5 -> 2, -1.5 -> -2)."""
    if x >= 0.0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


@dataclass(frozen=True)
class FuzzySet:
    """Triangular (a,b,c) or trapezoidal (a,b,c,d) membership function.

    Membership is piecewise linear: 0 outside the support, 1 on the peak or
    plateau. Coincident breakpoints give crisp shoulders.
    """

    name: str
    points: tuple

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if len(pts) not in (3, 4):
            raise PartitionError(
                f"set {self.name!r}: need 3 (triangle) or 4 (trapezoid) "
                f"breakpoints, got {len(pts)}"
            )
        if any(not math.isfinite(p) for p in pts):
            raise PartitionError(f"set {self.name!r}: non-finite breakpoint")
        if any(hi < lo for lo, hi in zip(pts, pts[1:])):
            raise PartitionError(f"set {self.name!r}: breakpoints must be nondecreasing: {pts}")
        object.__setattr__(self, "points", pts)

    @property
    def support(self) -> tuple:
        return (self.points[0], self.points[-1])

    @property
    def peak(self) -> float:
        """Left edge of the plateau (the apex for a triangle)."""
        return self.points[1]

    def membership(self, x: float) -> float:
        """Degree of membership of ``x``; callers clamp x into the domain."""
        if len(self.points) == 3:
            a, b, c, d = self.points[0], self.points[1], self.points[1], self.points[2]
        else:
            a, b, c, d = self.points
        if x < a or x > d:
            return 0.0
        if x < b:
            return (x - a) / (b - a)
        if x <= c:
            return 1.0
        return (d - x) / (d - c)


@dataclass(frozen=True)
class FuzzyPartition:
    """Ordered linguistic sets forming a partition of unity over ``domain``."""

    label: str
    sets: tuple
    domain: tuple

    def __post_init__(self):
        lo, hi = (float(self.domain[0]), float(self.domain[1]))
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise PartitionError(f"{self.label}: bad domain {self.domain}")
        object.__setattr__(self, "domain", (lo, hi))
        object.__setattr__(self, "sets", tuple(self.sets))
        if not self.sets:
            raise PartitionError(f"{self.label}: no sets")
        for s in self.sets:
            a, d = s.support
            if a < lo or d > hi:
                raise PartitionError(f"{self.label}/{s.name}: support outside domain")
        peaks = [s.peak for s in self.sets]
        if any(q <= p for p, q in zip(peaks, peaks[1:])):
            raise PartitionError(f"{self.label}: sets must be ordered by peak position")
        # The degree sum is piecewise linear, so checking it at every
        # breakpoint (plus the domain edges) proves it everywhere.
        knots = sorted({lo, hi, *(p for s in self.sets for p in s.points)})
        for x in knots:
            total = sum(s.membership(x) for s in self.sets)
            if abs(total - 1.0) > RUSPINI_TOL:
                raise PartitionError(
                    f"{self.label}: membership degrees sum to {total!r} at x={x!r}"
                )

    def clamp(self, x: float) -> float:
        lo, hi = self.domain
        return lo if x < lo else hi if x > hi else x

    def memberships(self, x: float) -> tuple:
        """Degrees of all sets at ``x`` (clamped into the domain)."""
        xc = self.clamp(x)
        return tuple(s.membership(xc) for s in self.sets)

    def set_names(self) -> tuple:
        return tuple(s.name for s in self.sets)


def ruspini_partition(label, domain, knots, names) -> FuzzyPartition:
    """Build a Ruspini partition from interior peak positions.

    The first and last sets are shoulder trapezoids, interior sets are
    triangles between neighbouring knots.
    """
    lo, hi = float(domain[0]), float(domain[1])
    knots = [float(k) for k in knots]
    if len(knots) != len(names) or len(knots) < 2:
        raise PartitionError("need one knot per set name, at least two")
    sets = []
    for i, name in enumerate(names):
        if i == 0:
            sets.append(FuzzySet(name, (lo, lo, knots[0], knots[1])))
        elif i == len(names) - 1:
            sets.append(FuzzySet(name, (knots[i - 1], knots[i], hi, hi)))
        else:
            sets.append(FuzzySet(name, (knots[i - 1], knots[i], knots[i + 1])))
    return FuzzyPartition(label, tuple(sets), (lo, hi))


def default_workload_partition() -> FuzzyPartition:
    sets = (
        FuzzySet("low", (0, 0, 20, 50)),
        FuzzySet("medium", (20, 50, 80)),
        FuzzySet("high", (50, 80, 100, 100)),
    )
    return FuzzyPartition("w", sets, (0.0, 100.0))


def default_response_partition(rt_des_ms: float, headroom: float = 2.0) -> FuzzyPartition:
    """good/ok/bad over [0, 2*headroom*rt_des_ms], knots at 0.2/0.5/0.8."""
    hi = 2.0 * headroom * rt_des_ms
    return ruspini_partition("rt", (0.0, hi), (0.2 * hi, 0.5 * hi, 0.8 * hi), ("good", "ok", "bad"))


@dataclass(frozen=True)
class RuleBase:
    """Full grid of rules over the input partitions.

    ``antecedents[i]`` holds one set index per input; ``actions`` is the
    ordered set of integer node deltas; ``consequents`` (optional) pins a
    fixed action value per rule for learning-free operation.
    """

    antecedents: tuple
    actions: tuple
    consequents: tuple = None

    def __post_init__(self):
        actions = tuple(int(a) for a in self.actions)
        if len(set(actions)) != len(actions) or not actions:
            raise PartitionError(f"actions must be distinct integers: {actions}")
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "antecedents", tuple(tuple(a) for a in self.antecedents))
        n_inputs = len(self.antecedents[0]) if self.antecedents else 0
        if any(len(a) != n_inputs for a in self.antecedents):
            raise PartitionError("all rules must reference every input")
        if self.consequents is not None:
            cons = tuple(int(c) for c in self.consequents)
            if len(cons) != len(self.antecedents):
                raise PartitionError("need one consequent per rule")
            bad = [c for c in cons if c not in actions]
            if bad:
                raise PartitionError(f"consequents outside the action set: {bad}")
            object.__setattr__(self, "consequents", cons)

    @property
    def n_rules(self) -> int:
        return len(self.antecedents)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @classmethod
    def full_grid(cls, set_counts, actions, consequents=None) -> "RuleBase":
        """Enumerate the cartesian product of input sets once, input-major."""
        ante = tuple(itertools.product(*(range(n) for n in set_counts)))
        return cls(ante, tuple(actions), consequents)


def validate_rule_grid(rules: RuleBase, partitions) -> None:
    """Check that the rule base covers the partitions' product exactly once."""
    expected = set(itertools.product(*(range(len(p.sets)) for p in partitions)))
    seen = list(rules.antecedents)
    if len(seen) != len(set(seen)) or set(seen) != expected:
        raise PartitionError("rules must enumerate the full input-set product exactly once")


def fuzzify(inputs, partitions, rules: RuleBase):
    """Firing degree per rule: product of the antecedent memberships.

    Out-of-domain inputs are clamped. With Ruspini partitions the result
    sums to one.
    """
    mems = [p.memberships(x) for x, p in zip(inputs, partitions)]
    firing = []
    for ante in rules.antecedents:
        deg = 1.0
        for input_idx, set_idx in enumerate(ante):
            deg *= mems[input_idx][set_idx]
        firing.append(deg)
    return firing


def blend(firing, consequents) -> float:
    """Firing-weighted sum of per-rule action values (the raw crisp output)."""
    return sum(f * a for f, a in zip(firing, consequents))


def defuzzify(firing, consequents, actions) -> int:
    """Crisp node delta: weighted average rounded half away from zero."""
    delta = round_half_away_from_zero(blend(firing, consequents))
    return max(min(actions), min(max(actions), delta))


def rules_text(rules: RuleBase, consequents, partitions) -> str:
    """Human-readable rule listing, one ``IF .. THEN delta=..`` line per rule."""
    lines = []
    for ante, value in zip(rules.antecedents, consequents):
        clauses = " AND ".join(
            f"{p.label} IS {p.sets[set_idx].name}" for p, set_idx in zip(partitions, ante)
        )
        lines.append(f"IF {clauses} THEN delta={int(value)}")
    return "\n".join(lines) + "\n"
