import numpy as np
import pytest

from fqlscale import config as config_mod
from fqlscale import fuzzy, learning, metrics, rewards
from fqlscale.cluster import Observation
from fqlscale.control import EnforcerConfig, ExperimentLog, ScalingController, enforce
from fqlscale.errors import SimulationError

ACTIONS = (-2, -1, 0, 1, 2)
WEIGHTS = rewards.RewardWeights(1, 1, 1)
SLO = rewards.SloConfig(rt_des_ms=1000.0, th_max=10.0, vm_max=7)


def make_obs(t, w=10.0, rt=500.0, th=0, vm=4):
    return Observation(t=t, w=w, rt_ms=rt, rt_p95_ms=rt, th=th, vm=vm,
                       no_completions=th == 0, rts_ms=())


class StubEnv:
    """Schedules instantly (configurable delay); tracks in-flight changes."""

    def __init__(self, delay=0.0):
        self.delay = delay
        self.t = 0.0
        self.scheduled = []

    @property
    def has_pending(self):
        return False

    def schedule_scaling(self, delta):
        self.scheduled.append((self.t, delta))
        return self.t + self.delay


def make_controller(kind="S1", consequents=None, seed=0, settle_s=10.0,
                    eta=0.1, gamma=0.8, node_max=7):
    partitions = (fuzzy.default_workload_partition(), fuzzy.default_response_partition(1000.0))
    rules = fuzzy.RuleBase.full_grid((3, 3), ACTIONS, consequents)
    qtable = learning.QTable(9, ACTIONS, eta, gamma)
    return ScalingController(
        partitions=partitions, rules=rules, qtable=qtable,
        strategy=learning.ExplorationStrategy(kind),
        monitor=learning.ConvergenceMonitor(),
        enforcer=EnforcerConfig(1, node_max),
        weights=WEIGHTS, slo=SLO, rng=np.random.default_rng(seed), settle_s=settle_s,
    )


class TestEnforce:
    def test_clamped_at_upper_bound(self):
        assert enforce(2, 7, EnforcerConfig(1, 7), in_flight=False) == 0

    def test_partial_clamp_at_lower_bound(self):
        assert enforce(-2, 2, EnforcerConfig(1, 7), in_flight=False) == -1

    def test_pass_through(self):
        assert enforce(1, 3, EnforcerConfig(1, 7), in_flight=False) == 1

    def test_blocked_while_in_flight(self):
        assert enforce(2, 3, EnforcerConfig(1, 7), in_flight=True) == 0

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValueError):
            EnforcerConfig(5, 3)


class TestTick:
    def test_zero_consequents_never_act(self):
        ctl = make_controller("S5", consequents=[0] * 9)
        env = StubEnv()
        for k in range(1, 50):
            env.t = 10.0 * k
            res = ctl.tick(make_obs(env.t), env)
            assert res.raw_delta == 0 and res.enforced_delta == 0
        assert env.scheduled == [] and ctl.pending is None

    def test_clamp_at_node_max_means_no_action(self):
        ctl = make_controller("S5", consequents=[2] * 9)
        env = StubEnv()
        env.t = 10.0
        res = ctl.tick(make_obs(10.0, vm=7), env)
        assert res.raw_delta == 2 and res.enforced_delta == 0
        assert ctl.pending is None

    def test_in_flight_blocks_regardless_of_output(self):
        ctl = make_controller("S5", consequents=[2] * 9, settle_s=10.0)
        env = StubEnv(delay=95.0)  # enacts at t=105, settles at t=115
        env.t = 10.0
        first = ctl.tick(make_obs(10.0, vm=3), env)
        assert first.enforced_delta == 2
        for k in range(2, 12):  # t = 20 .. 110, all before resolution
            env.t = 10.0 * k
            res = ctl.tick(make_obs(env.t, vm=3), env)
            assert res.enforced_delta == 0
            assert res.raw_delta == 2  # controller output computed anyway
        assert len(env.scheduled) == 1

    def test_action_reopens_after_settle(self):
        ctl = make_controller("S5", consequents=[2] * 9, settle_s=10.0)
        env = StubEnv(delay=0.0)
        env.t = 10.0
        ctl.tick(make_obs(10.0, vm=3), env)   # enacted at t=10
        env.t = 20.0
        res = ctl.tick(make_obs(20.0, vm=5), env)  # resolves, then acts again
        assert res.reward is not None
        assert res.enforced_delta == 2
        assert len(env.scheduled) == 2


class TestResolve:
    def test_reward_is_utility_difference_and_cell_moves(self):
        ctl = make_controller("S1", seed=1)
        ctl.qtable.q[0, 4] = 1e-12  # pin the greedy choice of the firing rule
        ctl.monitor.converged_at = 0  # S1 post-convergence; eps=0.2
        env = StubEnv(delay=0.0)
        env.t = 10.0
        first = ctl.tick(make_obs(10.0, th=0), env)
        assert first.enforced_delta == 2  # greedy +2 from the pinned cell
        assert ctl.pending is not None and ctl.pending.chosen.actions[0] == 4
        env.t = 20.0
        res = ctl.tick(make_obs(20.0, th=10), env)  # th 0 -> th_max: utility +1
        assert res.reward == pytest.approx(1.0, abs=1e-12)
        assert ctl.qtable.q[0, 4] == pytest.approx(0.1, abs=1e-9)
        assert ctl.steps == 1
        assert len(ctl.audit) == 1

    def test_unchanged_utility_gives_zero_reward(self):
        ctl = make_controller("S1", seed=3)
        ctl.qtable.q[0, 4] = 5.0
        ctl.monitor.converged_at = 0
        env = StubEnv(delay=0.0)
        env.t = 10.0
        ctl.tick(make_obs(10.0), env)
        q_sel = ctl.pending.q_at_selection
        env.t = 20.0
        res = ctl.tick(make_obs(20.0), env)
        assert res.reward == 0.0
        # dq = gamma * V(s') - Q(s, a) with the table as updated... the update
        # itself uses the pre-update table, so compare against the stored Q
        assert res.dq == pytest.approx(0.8 * 5.0 - q_sel, abs=1e-9)

    def test_s5_resolves_without_updating(self):
        ctl = make_controller("S5", consequents=[1] * 9)
        env = StubEnv(delay=0.0)
        env.t = 10.0
        ctl.tick(make_obs(10.0, vm=3), env)
        assert ctl.pending is not None
        env.t = 20.0
        res = ctl.tick(make_obs(20.0, vm=4, th=5), env)
        assert res.reward is not None and res.dq is None
        assert not ctl.qtable.q.any()
        assert ctl.steps == 0

    def test_double_resolution_impossible(self):
        ctl = make_controller("S5", consequents=[1] * 9)
        with pytest.raises(SimulationError):
            ctl._resolve(make_obs(10.0), 1.0)


class TestRunLoop:
    def _cfg(self):
        return config_mod.load_config(overrides={
            "workload": {"duration_s": 1200.0, "rate_scale": 0.2},
            "sim": {"delays": {"scale_out": [30.0, 40.0], "scale_in": [10.0, 15.0]}},
        })

    def test_runs_are_deterministic(self):
        from fqlscale.harness import run_cell

        cfg = self._cfg()
        log_a = run_cell(cfg, "S1", "big_spike", seed=4)
        log_b = run_cell(cfg, "S1", "big_spike", seed=4)
        assert log_a.rows == log_b.rows
        assert log_a.request_rts == log_b.request_rts
        assert log_a.meta == log_b.meta

    def test_save_load_roundtrip(self, tmp_path):
        from fqlscale.harness import run_cell

        log = run_cell(self._cfg(), "S2", "dual_phase", seed=1)
        log.save(tmp_path, "cell")
        loaded = ExperimentLog.load(tmp_path, "cell")
        assert loaded.rows == log.rows
        assert loaded.request_rts == log.request_rts
        assert loaded.meta == log.meta

    def test_audit_passes_for_all_strategies(self):
        from fqlscale.harness import run_cell

        cfg = self._cfg()
        for strategy in ("S1", "S3", "S5"):
            log = run_cell(cfg, strategy, "quickly_varying", seed=2)
            assert metrics.audit_delayed_feedback(log) == []
            assert any(r["enforced_delta"] != 0 for r in log.rows)

    def test_zero_tick_trace_gives_empty_log(self):
        from fqlscale import control, workloads
        from fqlscale.harness import run_cell

        cfg = self._cfg()
        trace = workloads.generate("big_spike", 10.0, seed=0)
        assert trace.n_intervals == 1  # single tick, then nothing
        env = config_mod.build_cluster(cfg, np.random.default_rng(0))
        controller = config_mod.build_controller(cfg, "S5", np.random.default_rng(1))
        log = control.run_loop(env, controller, trace, iter(()),
                               WEIGHTS, SLO, {"strategy": "S5", "pattern": "big_spike", "seed": 0})
        assert log.rows == [] and log.request_rts == []

    def test_convergence_reported_only_for_s1_to_s3(self):
        from fqlscale.harness import run_cell

        cfg = config_mod.load_config(overrides={
            "workload": {"duration_s": 2400.0, "rate_scale": 0.2},
            "sim": {"delays": {"scale_out": [15.0, 20.0], "scale_in": [5.0, 10.0]}},
            "learning": {"convergence": {"tolerance": 10.0, "window": 1}},
        })
        s1 = run_cell(cfg, "S1", "slowly_varying", seed=0)
        s4 = run_cell(cfg, "S4", "slowly_varying", seed=0)
        s5 = run_cell(cfg, "S5", "slowly_varying", seed=0)
        assert s1.meta["convergence_step"] is not None
        assert s4.meta["convergence_step"] is None
        assert s4.meta["monitor_converged_at"] is not None  # hit internally, reported absent
        assert s5.meta["convergence_step"] is None
