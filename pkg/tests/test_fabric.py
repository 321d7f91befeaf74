"""Training-fabric tests: determinism, routing, delivery, liveness."""

import numpy as np
import pytest

from tscbench import fabric
from tscbench.agents import DqnAgent, DqnConfig, Experience
from tscbench.fabric import (FabricConfig, Learner, _exploration_scale,
                             _Mailbox, ParameterUpdateMsg,
                             default_assignment, train)

from conftest import constant_demand


def short_demand(net, rate=500.0):
    return constant_demand(list(net.entry_lanes), rate, horizon=200.0)


class TestAssignment:
    def test_round_robin(self, double_net):
        a = default_assignment(double_net, 2)
        assert sorted(a.values()) == [0, 1]
        assert default_assignment(double_net, 1) == {"a": 0, "b": 0}

    def test_bad_assignment_rejected(self, double_net, double_demand):
        with pytest.raises(ValueError, match="assignment"):
            train(double_net, double_demand, "dqn", 0,
                  fabric=FabricConfig(episode_budget=1,
                                      assignment={"a": 0}))


class TestLearner:
    def make(self, warmup=4):
        agents = {"x": DqnAgent(4, 2, 0, DqnConfig(batch_size=4))}
        return Learner(0, ["x"], agents, batch_size=4, warmup=warmup,
                       replay_capacity=100, seed=0)

    def exp(self, iid="x"):
        return Experience(np.zeros(4), 0, -0.5, np.zeros(4), False, iid)

    def test_routing_rejects_unassigned(self):
        lrn = self.make()
        with pytest.raises(ValueError, match="unassigned"):
            lrn.ingest(self.exp("other"))

    def test_warmup_gate(self):
        lrn = self.make(warmup=8)
        for _ in range(7):
            lrn.ingest(self.exp())
            assert lrn.try_train() is None
        lrn.ingest(self.exp())
        msg = lrn.try_train()
        assert isinstance(msg, ParameterUpdateMsg)
        assert lrn.update_counts["x"] == 1

    def test_round_robin_training_balance(self):
        agents = {"a": DqnAgent(4, 2, 0, DqnConfig(batch_size=2)),
                  "b": DqnAgent(4, 2, 1, DqnConfig(batch_size=2))}
        lrn = Learner(0, ["a", "b"], agents, batch_size=2, warmup=2,
                      replay_capacity=100, seed=0)
        for _ in range(3):
            lrn.ingest(self.exp("a"))
            lrn.ingest(self.exp("b"))
        for _ in range(9):
            lrn.try_train()
        counts = lrn.update_counts
        assert abs(counts["a"] - counts["b"]) <= 1


class TestMailbox:
    def test_latest_wins(self):
        mb = _Mailbox()
        p = object()
        mb.offer(ParameterUpdateMsg("x", p, 3))
        mb.offer(ParameterUpdateMsg("x", p, 1))  # stale, dropped
        msg = mb.take("x")
        assert msg.version == 3
        assert mb.take("x") is None


def test_exploration_scale_spread():
    assert _exploration_scale(0, 4) == 1.0
    assert _exploration_scale(3, 4) == pytest.approx(0.4)
    assert _exploration_scale(0, 1) == 1.0
    scales = [_exploration_scale(i, 5) for i in range(5)]
    assert scales == sorted(scales, reverse=True)


class TestSyncTraining:
    def test_bit_identical_repeats(self, single_net, single_demand, tmp_path):
        runs = []
        for rep in range(2):
            res = train(single_net, single_demand, "dqn", seed=5,
                        fabric=FabricConfig(episode_budget=3),
                        out_dir=str(tmp_path / f"rep{rep}"))
            runs.append(res)
        a, b = runs
        assert a.emitted == b.emitted and a.received == b.received
        assert a.update_counts == b.update_counts
        for iid in a.agents:
            pa, pb = a.agents[iid].online, b.agents[iid].online
            assert pa.version == pb.version
            assert pa.allclose(pb, atol=0.0)  # bit-identical
        assert a.r_min == b.r_min
        ckpt_a = (tmp_path / "rep0" / "checkpoints").iterdir()
        files_a = sorted(p.name for p in ckpt_a)
        files_b = sorted(p.name for p in
                         (tmp_path / "rep1" / "checkpoints").iterdir())
        assert files_a == files_b
        for name in files_a:
            if name.endswith(".ckpt"):
                assert (tmp_path / "rep0" / "checkpoints" / name).read_bytes() \
                    == (tmp_path / "rep1" / "checkpoints" / name).read_bytes()

    def test_ddpg_trains(self, single_net, single_demand):
        res = train(single_net, single_demand, "ddpg", seed=1,
                    fabric=FabricConfig(episode_budget=2))
        assert res.emitted == res.received > 0
        assert all(v > 0 for v in res.update_counts.values())
        assert all(v > 0 for v in res.r_min.values())

    def test_training_log_rows(self, single_net, single_demand, tmp_path):
        res = train(single_net, single_demand, "dqn", seed=2,
                    fabric=FabricConfig(episode_budget=2),
                    out_dir=str(tmp_path))
        assert (tmp_path / "training_log.csv").exists()
        assert len(res.log) == sum(res.update_counts.values())
        wall = [row[0] for row in res.log]
        assert wall == sorted(wall)


class TestThreadedTraining:
    def test_exactly_once_and_liveness(self, double_net):
        demand = short_demand(double_net)
        res = train(double_net, demand, "dqn", seed=3,
                    fabric=FabricConfig(n_actors=4, n_learners=2,
                                        episode_budget=6, queue_capacity=1))
        assert res.emitted == res.received > 0

    def test_partition_across_learners(self, double_net):
        demand = short_demand(double_net)
        res = train(double_net, demand, "dqn", seed=4,
                    fabric=FabricConfig(n_actors=2, n_learners=2,
                                        episode_budget=4))
        assert set(res.update_counts) == {"a", "b"}

    def test_version_matches_update_count(self, double_net):
        demand = short_demand(double_net)
        res = train(double_net, demand, "dqn", seed=5,
                    fabric=FabricConfig(n_actors=2, n_learners=1,
                                        episode_budget=4))
        for iid, agent in res.agents.items():
            assert agent.acting_params().version == res.update_counts[iid]

    def test_unknown_algo(self, double_net, double_demand):
        with pytest.raises(ValueError):
            train(double_net, double_demand, "sarsa", 0)
