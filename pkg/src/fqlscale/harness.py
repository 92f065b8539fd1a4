"""Experiment harness: strategy x pattern x seed grids, the reactive
threshold baseline standing in for the platform-native auto-scaler, and
report emission (CSV, JSON summary, plain-text comparison table)."""

from __future__ import annotations

import csv
import json
import traceback
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from fqlscale import config as config_mod
from fqlscale import control, kernel, metrics, workloads
from fqlscale.cluster import nearest_rank_percentile
from fqlscale.control import TickResult, enforce


def baseline_threshold(window_rts_ms, hi_ms: float, lo_ms: float) -> int:
    """Reactive rule: +1 when the window's p95 response time is above the
    high threshold, -1 when below the low one, else hold."""
    if not window_rts_ms:
        return 0
    p95 = nearest_rank_percentile(window_rts_ms, 95.0)
    if p95 > hi_ms:
        return 1
    if p95 < lo_ms:
        return -1
    return 0


class ThresholdController:
    """Stand-in for a platform-native reactive scaler (one node at a time,
    hysteresis via distinct thresholds, blocked while a change is in flight)."""

    def __init__(self, enforcer, rt_hi_ms: float, rt_lo_ms: float, window_ticks: int):
        if int(window_ticks) < 1:
            raise ValueError(f"window_ticks must be >= 1, got {window_ticks}")
        self.enforcer = enforcer
        self.rt_hi_ms = float(rt_hi_ms)
        self.rt_lo_ms = float(rt_lo_ms)
        self._window = deque(maxlen=int(window_ticks))

    def tick(self, obs, env) -> TickResult:
        self._window.append(obs.rts_ms)
        rts = [rt for tick_rts in self._window for rt in tick_rts]
        raw = baseline_threshold(rts, self.rt_hi_ms, self.rt_lo_ms)
        allowed = enforce(raw, obs.vm, self.enforcer, env.has_pending)
        if allowed != 0:
            env.schedule_scaling(allowed)
        return TickResult(obs.t, raw, allowed, None, None, None, None)


def run_cell(cfg: dict, strategy: str, pattern: str, seed: int,
             record_events: bool = False) -> control.ExperimentLog:
    """One seeded run. The seed fixes the trace and arrival stream, so runs
    with different strategies but the same seed see identical workloads."""
    rngs = config_mod.spawn_rngs(seed)
    trace = workloads.generate(
        pattern, cfg["workload"]["duration_s"], seed,
        cfg["control"]["interval_s"], cfg["workload"]["params"],
    )
    env = config_mod.build_cluster(cfg, rngs["delays"], record_events)
    if strategy == "azure":
        controller = ThresholdController(
            control.EnforcerConfig(cfg["sim"]["node_min"], cfg["sim"]["node_max"]),
            cfg["baseline"]["rt_hi_ms"], cfg["baseline"]["rt_lo_ms"],
            cfg["baseline"]["window_ticks"],
        )
    else:
        controller = config_mod.build_controller(cfg, strategy, rngs["controller"])
    batches = workloads.arrival_batches(trace, rngs["arrivals"], cfg["workload"]["rate_scale"])
    meta_extra = {
        "strategy": strategy,
        "pattern": pattern,
        "seed": int(seed),
        "eta": cfg["learning"]["eta"],
        "gamma": cfg["learning"]["gamma"],
        "backend": kernel.BACKEND,
    }
    return control.run_loop(
        env, controller, trace, batches,
        config_mod.build_weights(cfg), config_mod.build_slo(cfg), meta_extra,
    )


def cell_stem(strategy: str, pattern: str, seed: int) -> str:
    return f"{strategy}_{pattern}_seed{seed}"


def _worker(args):
    cfg, strategy, pattern, seed, out_dir = args
    try:
        log = run_cell(cfg, strategy, pattern, seed)
        if out_dir is not None:
            log.save(out_dir, cell_stem(strategy, pattern, seed))
        return metrics.compute_metrics(log), None
    except Exception:
        return None, (strategy, pattern, seed, traceback.format_exc())


def run_grid(cfg: dict, strategies=None, patterns=None, seeds=None,
             out_dir=None, workers: int = None):
    """Run every (strategy, pattern, seed) cell; per-cell failures are
    recorded and the rest of the grid continues.

    Returns (reports, failures).
    """
    strategies = list(strategies if strategies is not None else cfg["harness"]["strategies"])
    patterns = list(patterns if patterns is not None else cfg["harness"]["patterns"])
    seeds = list(seeds if seeds is not None else config_mod.parse_seeds(cfg["harness"]["seeds"]))
    if workers is None:
        workers = cfg["harness"]["workers"] or None  # None -> cpu_count
    cells = [(cfg, s, p, seed, out_dir) for s in strategies for p in patterns for seed in seeds]
    reports, failures = [], []
    if workers == 1 or len(cells) == 1:
        results = map(_worker, cells)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_worker, cells)
    for report, failure in results:
        if failure is not None:
            failures.append(failure)
        else:
            reports.append(report)
    if not (workers == 1 or len(cells) == 1):
        pool.shutdown()
    return reports, failures


REPORT_COLUMNS = ("strategy", "pattern", "seed", "rt_p95_ms", "mean_vm", "node_changes",
                  "action_count", "convergence_step", "learning_steps", "cumulative_utility")
TABLE_COLUMNS = ("strategy", "pattern", "rt_p95_ms", "mean_vm", "node_changes", "convergence_step")


def emit(reports, out_dir) -> dict:
    """Write results.csv (per seed), summary.json and table.txt (medians).

    Deterministic output: rows are sorted and floats use repr, so re-emitting
    the same reports reproduces the same bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(reports, key=lambda r: (r.strategy, r.pattern, r.seed))
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for rep in ordered:
            rec = rep.as_dict()
            writer.writerow([_fmt(rec[c]) for c in REPORT_COLUMNS])
    rows = metrics.aggregate_reports(ordered)
    with open(out / "summary.json", "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    table = _format_table(rows)
    (out / "table.txt").write_text(table)
    return {"results": out / "results.csv", "summary": out / "summary.json",
            "table": out / "table.txt"}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _format_table(rows) -> str:
    display = []
    for row in rows:
        display.append((
            row["strategy"], row["pattern"],
            f"{row['rt_p95_ms']:.1f}", f"{row['mean_vm']:.2f}",
            f"{row['node_changes']:.0f}",
            "N/A" if row["convergence_step"] is None else f"{row['convergence_step']:.0f}",
        ))
    headers = ("strategy", "pattern", "rt_p95_ms", "mean_vm", "node_changes", "convergence")
    widths = [max(len(h), *(len(d[i]) for d in display)) if display else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for d in display:
        lines.append("  ".join(v.ljust(w) for v, w in zip(d, widths)).rstrip())
    return "\n".join(lines) + "\n"
