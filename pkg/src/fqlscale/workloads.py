"""Synthetic workload patterns and their conversion to request arrivals.

Each pattern is a deterministic, seeded intensity series in [0, 100] sampled
once per control interval. Intensity doubles as the request size knob, so a
hotter workload also means more expensive requests. Arrivals are Poisson-
thinned per interval with mean rate_scale * intensity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from fqlscale.cluster import Request
from fqlscale.errors import ConfigError

PATTERNS = (
    "big_spike",
    "dual_phase",
    "large_variations",
    "quickly_varying",
    "slowly_varying",
    "steep_tri_phase",
)

# Shape constants (fractions of the duration unless noted). Overridable per
# call; the defaults are what the experiment harness uses.
DEFAULT_PARAMS = {
    "big_spike": {"base": 12.0, "spike_center": 0.45, "spike_sigma": 0.04, "spike_amp": 75.0, "noise": 2.0},
    "dual_phase": {"low": 20.0, "high": 70.0, "noise": 2.0},
    "large_variations": {"mid": 50.0, "amp": 35.0, "cycles": 3.0, "noise": 2.0},
    "quickly_varying": {"mid": 50.0, "amp1": 20.0, "cycles1": 24.0, "amp2": 14.0, "cycles2": 57.0, "noise": 6.0},
    "slowly_varying": {"mid": 40.0, "amp": 14.0, "cycles": 1.5, "noise": 2.0},
    "steep_tri_phase": {"levels": (15.0, 50.0, 85.0), "noise": 2.0},
}


@dataclass(frozen=True)
class WorkloadTrace:
    """Seeded intensity samples, strictly increasing in time."""

    pattern: str
    samples: tuple  # (t_seconds, intensity in [0, 100])
    seed: int
    interval_s: float

    def __post_init__(self):
        times = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")
        bad = [i for _, i in self.samples if not 0.0 <= i <= 100.0]
        if bad:
            raise ValueError(f"intensities outside [0, 100]: {bad[:3]}")

    @property
    def duration_s(self) -> float:
        return self.samples[-1][0] + self.interval_s if self.samples else 0.0

    @property
    def n_intervals(self) -> int:
        return len(self.samples)


def _shape(pattern: str, t: np.ndarray, duration: float, p: dict) -> np.ndarray:
    if pattern == "big_spike":
        center, sigma = p["spike_center"] * duration, p["spike_sigma"] * duration
        return p["base"] + p["spike_amp"] * np.exp(-0.5 * ((t - center) / sigma) ** 2)
    if pattern == "dual_phase":
        return np.where(t < 0.5 * duration, p["low"], p["high"])
    if pattern in ("large_variations", "slowly_varying"):
        return p["mid"] + p["amp"] * np.sin(2.0 * math.pi * p["cycles"] * t / duration)
    if pattern == "quickly_varying":
        return (
            p["mid"]
            + p["amp1"] * np.sin(2.0 * math.pi * p["cycles1"] * t / duration)
            + p["amp2"] * np.sin(2.0 * math.pi * p["cycles2"] * t / duration + 1.3)
        )
    if pattern == "steep_tri_phase":
        lo, mid, hi = p["levels"]
        return np.where(t < duration / 3.0, lo, np.where(t < 2.0 * duration / 3.0, mid, hi))
    raise ConfigError(f"unknown workload pattern {pattern!r}; expected one of {PATTERNS}")


def generate(pattern: str, duration_s: float, seed: int,
             interval_s: float = 10.0, params: dict = None) -> WorkloadTrace:
    """Deterministic trace for (pattern, seed): shape plus bounded noise."""
    if duration_s <= 0:
        raise ConfigError(f"duration must be > 0, got {duration_s}")
    merged = dict(DEFAULT_PARAMS.get(pattern, {}))
    if pattern not in PATTERNS:
        raise ConfigError(f"unknown workload pattern {pattern!r}; expected one of {PATTERNS}")
    if params:
        merged.update(params)
    n = int(math.ceil(duration_s / interval_s))
    t = np.arange(n, dtype=np.float64) * interval_s
    rng = np.random.default_rng(seed)
    values = _shape(pattern, t, float(duration_s), merged)
    values = values + rng.uniform(-merged["noise"], merged["noise"], size=n)
    values = np.clip(values, 0.0, 100.0)
    samples = tuple((float(tt), float(v)) for tt, v in zip(t, values))
    return WorkloadTrace(pattern, samples, int(seed), float(interval_s))


def spike_window(duration_s: float, params: dict = None) -> tuple:
    """Time window (3 sigma around the centre) holding the big_spike burst."""
    p = dict(DEFAULT_PARAMS["big_spike"])
    if params:
        p.update(params)
    center = p["spike_center"] * duration_s
    half = 3.0 * p["spike_sigma"] * duration_s
    return (center - half, center + half)


def arrival_batches(trace: WorkloadTrace, rng, rate_scale: float = 0.1):
    """Yield (interval_index, arrival_times, sizes) per control interval.

    Counts are Poisson with mean rate_scale * intensity; arrival offsets are
    uniform within the interval; sizes are the rounded intensity.
    """
    if rate_scale < 0:
        raise ConfigError(f"rate_scale must be >= 0, got {rate_scale}")
    dt = trace.interval_s
    for k, (t0, intensity) in enumerate(trace.samples):
        count = int(rng.poisson(rate_scale * intensity))
        times = t0 + np.sort(rng.uniform(0.0, dt, size=count))
        sizes = np.full(count, int(math.floor(intensity + 0.5)), dtype=np.int64)
        yield k, times, sizes


def to_arrivals(trace: WorkloadTrace, rng, rate_scale: float = 0.1):
    """Flatten arrival_batches into Request objects."""
    out = []
    for _k, times, sizes in arrival_batches(trace, rng, rate_scale):
        out.extend(Request(float(t), int(n)) for t, n in zip(times, sizes))
    return out


def trace_to_csv(trace: WorkloadTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "intensity"])
        for t, v in trace.samples:
            writer.writerow([repr(t), repr(v)])


def trace_from_csv(path, pattern: str = "imported", seed: int = 0) -> WorkloadTrace:
    """Load a (t, intensity) CSV; the sampling interval is inferred."""
    samples = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            samples.append((float(row["t"]), float(row["intensity"])))
    if len(samples) < 2:
        raise ConfigError(f"trace {path} needs at least two samples")
    interval = samples[1][0] - samples[0][0]
    return WorkloadTrace(pattern, tuple(samples), seed, interval)
