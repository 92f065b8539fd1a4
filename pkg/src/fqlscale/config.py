"""Experiment configuration: defaults, YAML loading, env-var overrides and
builders that wire config into domain objects.

Any key can be overridden from the environment with the FQLSCALE_ prefix and
double underscores for nesting, e.g. ``FQLSCALE_SIM__NODE_MAX=9``; values are
parsed as YAML.
"""

from __future__ import annotations

import copy
import os
from pathlib import Path

import numpy as np
import yaml

from fqlscale import cluster, control, fuzzy, learning, rewards, workloads
from fqlscale.errors import ConfigError

ENV_PREFIX = "FQLSCALE_"

STRATEGY_NAMES = learning.STRATEGY_KINDS + ("azure",)

# (w, rt) rules in w-major order: low/medium/high x good/ok/bad. A sensible
# static policy for S5: scale on response-time pain, release when healthy
# and lightly loaded.
DEFAULT_CONSEQUENTS = (-1, 0, 1, 0, 1, 2, 0, 1, 2)

DEFAULTS = {
    "inputs": None,  # default partitions are derived from slo.rt_des_ms
    "actions": [-2, -1, 0, 1, 2],
    "rules": {"consequents": list(DEFAULT_CONSEQUENTS)},
    "reward": {"w1": 1.0, "w2": 1.0, "w3": 1.0},
    "slo": {"rt_des_ms": 1000.0, "th_max": 10.0, "vm_max": 7},
    "sim": {
        "node_min": 1,
        "node_max": 7,
        "initial_nodes": 1,
        "seed": 0,
        "delays": {"scale_out": [480.0, 540.0], "scale_in": [120.0, 180.0]},
        "service": {"base_ms": 50.0, "per_unit_ms": 10.0},
    },
    "control": {"interval_s": 10.0, "settle_intervals": 1},
    "learning": {
        "eta": 0.1,
        "gamma": 0.8,
        "strategy": "S1",
        "initial_epsilon": None,
        "post_convergence_epsilon": None,
        "exploration_horizon": None,
        "convergence": {"tolerance": 1e-3, "window": 10},
    },
    "workload": {
        "pattern": "big_spike",
        "duration_s": 3600.0,
        "seed": 1,
        "rate_scale": 0.1,
        "params": {},
    },
    "baseline": {"rt_hi_ms": 1000.0, "rt_lo_ms": 500.0, "window_ticks": 3},
    "harness": {
        "strategies": list(STRATEGY_NAMES),
        "patterns": list(workloads.PATTERNS),
        "seeds": "0..19",
        "workers": 0,  # 0 = os.cpu_count()
        "out_dir": "results",
        "record_events": False,
    },
}


def _deep_merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_env(cfg: dict, env) -> dict:
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in name[len(ENV_PREFIX):].split("__")]
        if parts == ["kernel"] or parts == ["pure_python"]:
            continue  # backend/build switches, not config keys
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {name}={raw!r}: {exc}") from exc
        node = cfg
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"unknown config key from env: {name}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key from env: {name}")
        node[parts[-1]] = value
    return cfg


def parse_seeds(spec) -> list:
    """Accept [0, 1, 2], a single int, or the range string 'a..b' (inclusive)."""
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, str):
        lo, sep, hi = spec.partition("..")
        if not sep:
            raise ConfigError(f"bad seed range {spec!r}, expected 'a..b'")
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise ConfigError(f"bad seed range {spec!r}") from exc
    try:
        return [int(s) for s in spec]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad seeds {spec!r}") from exc


def validate(cfg: dict) -> dict:
    lc = cfg["learning"]
    if lc["strategy"] not in STRATEGY_NAMES:
        raise ConfigError(f"unknown strategy {lc['strategy']!r}; expected one of {STRATEGY_NAMES}")
    for name in cfg["harness"]["strategies"]:
        if name not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {name!r}; expected one of {STRATEGY_NAMES}")
    for pattern in cfg["harness"]["patterns"] + [cfg["workload"]["pattern"]]:
        if pattern not in workloads.PATTERNS:
            raise ConfigError(f"unknown workload pattern {pattern!r}")
    if not 0.0 < lc["eta"] <= 1.0:
        raise ConfigError(f"learning.eta must be in (0, 1], got {lc['eta']}")
    if not 0.0 <= lc["gamma"] < 1.0:
        raise ConfigError(f"learning.gamma must be in [0, 1), got {lc['gamma']}")
    sim = cfg["sim"]
    if not 1 <= sim["node_min"] <= sim["initial_nodes"] <= sim["node_max"]:
        raise ConfigError("need 1 <= sim.node_min <= sim.initial_nodes <= sim.node_max")
    if int(cfg["slo"]["vm_max"]) != int(sim["node_max"]):
        raise ConfigError("slo.vm_max must match sim.node_max (the enforcer's upper bound)")
    if cfg["control"]["interval_s"] <= 0:
        raise ConfigError("control.interval_s must be > 0")
    if cfg["baseline"]["rt_lo_ms"] > cfg["baseline"]["rt_hi_ms"]:
        raise ConfigError("baseline.rt_lo_ms must be <= baseline.rt_hi_ms")
    parse_seeds(cfg["harness"]["seeds"])
    build_partitions(cfg)  # surfaces malformed membership functions early
    return cfg


def load_config(path=None, env=None, overrides: dict = None) -> dict:
    """Defaults <- YAML file <- FQLSCALE_* env vars <- explicit overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
        cfg = _deep_merge(cfg, data)
    cfg = _apply_env(cfg, os.environ if env is None else env)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    return validate(cfg)


# -- builders ---------------------------------------------------------------


def build_partitions(cfg: dict):
    if cfg["inputs"] is None:
        return (
            fuzzy.default_workload_partition(),
            fuzzy.default_response_partition(cfg["slo"]["rt_des_ms"]),
        )
    parts = []
    try:
        for spec in cfg["inputs"]:
            sets = tuple(fuzzy.FuzzySet(s["name"], tuple(s["points"])) for s in spec["sets"])
            for s, declared in zip(sets, spec["sets"]):
                want = 4 if declared.get("shape") == "trapezoid" else 3
                if declared.get("shape") in ("triangle", "trapezoid") and len(s.points) != want:
                    raise ConfigError(
                        f"set {s.name!r}: shape {declared['shape']} needs {want} points"
                    )
            parts.append(fuzzy.FuzzyPartition(spec["name"], sets, tuple(spec["domain"])))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed inputs section: {exc!r}") from exc
    except fuzzy.PartitionError as exc:
        raise ConfigError(str(exc)) from exc
    return tuple(parts)


def build_rules(cfg: dict, with_consequents: bool = True) -> fuzzy.RuleBase:
    partitions = build_partitions(cfg)
    consequents = cfg["rules"]["consequents"] if with_consequents else None
    try:
        return fuzzy.RuleBase.full_grid(
            [len(p.sets) for p in partitions], cfg["actions"], consequents
        )
    except fuzzy.PartitionError as exc:
        raise ConfigError(str(exc)) from exc


def build_strategy(cfg: dict, kind: str) -> learning.ExplorationStrategy:
    lc = cfg["learning"]
    try:
        return learning.ExplorationStrategy(
            kind,
            initial_epsilon=lc["initial_epsilon"],
            post_convergence_epsilon=lc["post_convergence_epsilon"],
            exploration_horizon=lc["exploration_horizon"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_monitor(cfg: dict) -> learning.ConvergenceMonitor:
    conv = cfg["learning"]["convergence"]
    return learning.ConvergenceMonitor(conv["tolerance"], conv["window"])


def build_weights(cfg: dict) -> rewards.RewardWeights:
    r = cfg["reward"]
    return rewards.RewardWeights(r["w1"], r["w2"], r["w3"])


def build_slo(cfg: dict) -> rewards.SloConfig:
    s = cfg["slo"]
    return rewards.SloConfig(s["rt_des_ms"], s["th_max"], int(s["vm_max"]))


def build_cluster(cfg: dict, rng, record_events: bool = False) -> cluster.Cluster:
    sim = cfg["sim"]
    delays = cluster.DelayModel(
        tuple(sim["delays"]["scale_out"]), tuple(sim["delays"]["scale_in"])
    )
    return cluster.Cluster(
        node_min=sim["node_min"], node_max=sim["node_max"],
        initial_nodes=sim["initial_nodes"],
        base_ms=sim["service"]["base_ms"], per_unit_ms=sim["service"]["per_unit_ms"],
        delays=delays, rng=rng, record_events=record_events,
    )


def build_controller(cfg: dict, kind: str, rng) -> control.ScalingController:
    partitions = build_partitions(cfg)
    rules = build_rules(cfg)
    lc = cfg["learning"]
    qtable = learning.QTable(rules.n_rules, rules.actions, lc["eta"], lc["gamma"])
    return control.ScalingController(
        partitions=partitions,
        rules=rules,
        qtable=qtable,
        strategy=build_strategy(cfg, kind),
        monitor=build_monitor(cfg),
        enforcer=control.EnforcerConfig(cfg["sim"]["node_min"], cfg["sim"]["node_max"]),
        weights=build_weights(cfg),
        slo=build_slo(cfg),
        rng=rng,
        settle_s=cfg["control"]["settle_intervals"] * cfg["control"]["interval_s"],
    )


def spawn_rngs(seed: int):
    """Independent streams per run: (trace seed, arrivals, delays, controller).

    The trace and arrival streams depend only on the seed, so different
    strategies see identical workloads for the same seed (paired runs).
    """
    ss = np.random.SeedSequence(int(seed))
    children = ss.spawn(3)
    return {
        "trace_seed": int(seed),
        "arrivals": np.random.default_rng(children[0]),
        "delays": np.random.default_rng(children[1]),
        "controller": np.random.default_rng(children[2]),
    }
