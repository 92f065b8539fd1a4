"""Self-learning fuzzy auto-scaling toolkit.

A fuzzy rule-based scaler whose rule consequents are learned online with
Q-learning, exercised against a deterministic discrete-event simulation of
an elastic cluster with delayed scaling enactment, plus an experiment
harness for strategy comparisons over synthetic workloads.
"""

from fqlscale.cluster import Cluster, DelayModel, Observation, Request, service_time
from fqlscale.control import EnforcerConfig, PendingFeedback, ScalingController, enforce, run_loop
from fqlscale.errors import ConfigError, ConservationError, SimulationError
from fqlscale.fuzzy import (
    FuzzyPartition,
    FuzzySet,
    RuleBase,
    defuzzify,
    fuzzify,
    rules_text,
)
from fqlscale.learning import (
    ChosenActions,
    ConvergenceMonitor,
    ExplorationStrategy,
    QTable,
    epsilon_schedule,
    load_snapshot,
    save_snapshot,
)
from fqlscale.rewards import RewardWeights, SloConfig, penalty_h, reward, utility
from fqlscale.workloads import PATTERNS, WorkloadTrace, generate, to_arrivals

__version__ = "0.1.0"

__all__ = [
    "Cluster", "DelayModel", "Observation", "Request", "service_time",
    "EnforcerConfig", "PendingFeedback", "ScalingController", "enforce", "run_loop",
    "ConfigError", "ConservationError", "SimulationError",
    "FuzzyPartition", "FuzzySet", "RuleBase", "defuzzify", "fuzzify", "rules_text",
    "ChosenActions", "ConvergenceMonitor", "ExplorationStrategy", "QTable",
    "epsilon_schedule", "load_snapshot", "save_snapshot",
    "RewardWeights", "SloConfig", "penalty_h", "reward", "utility",
    "PATTERNS", "WorkloadTrace", "generate", "to_arrivals",
    "__version__",
]
