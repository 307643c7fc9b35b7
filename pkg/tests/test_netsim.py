import pytest

from voxroom.errors import ScenarioError
from voxroom.netsim import (
    EventQueue,
    SimConfig,
    SimNet,
    UnreliableLink,
    build_random_write_script,
    run_scenario,
)


def digests(sim: SimNet) -> set:
    return {h.node.replica.digest() for h in sim.hosts.values()}


class TestEventQueue:
    def test_monotone_time(self):
        q = EventQueue()
        seen = []
        q.schedule(5.0, lambda: seen.append(q.now))
        q.schedule(2.0, lambda: seen.append(q.now))
        q.run_until(10.0)
        assert seen == [2.0, 5.0]
        assert q.now == 10.0

    def test_no_event_before_schedule_time(self):
        q = EventQueue()
        q.schedule(5.0, lambda: None)
        q.run_until(4.0)
        assert q.now == 4.0

    def test_past_scheduling_rejected(self):
        q = EventQueue()
        q.schedule(1.0, lambda: q.schedule(0.5, lambda: None))
        with pytest.raises(AssertionError):
            q.run_until(2.0)


class TestUnreliableLink:
    def test_delivery_rate_matches_loss_and_dup(self):
        config = SimConfig(seed=9, loss_rate=0.1, duplicate_rate=0.05, reorder=True)
        q = EventQueue()
        link = UnreliableLink(q, config, "probe")
        n = 100_000
        hits = [0]
        for _ in range(n):
            link.send(lambda: hits.__setitem__(0, hits[0] + 1))
        q.run_until(1e9)
        rate = hits[0] / n
        expected = (1 - 0.1) * (1 + 0.05)
        assert abs(rate - expected) <= 0.02

    def test_lossless_link_delivers_everything(self):
        config = SimConfig(seed=1)
        q = EventQueue()
        link = UnreliableLink(q, config, "clean")
        hits = [0]
        for _ in range(1000):
            link.send(lambda: hits.__setitem__(0, hits[0] + 1))
        q.run_until(1e9)
        assert hits[0] == 1000

    def test_fifo_when_reorder_disabled(self):
        config = SimConfig(seed=3, latency_min_ms=1, latency_max_ms=100, reorder=False)
        q = EventQueue()
        link = UnreliableLink(q, config, "fifo")
        order = []
        for i in range(50):
            link.send(lambda i=i: order.append(i))
        q.run_until(1e9)
        assert order == sorted(order)


BASE = dict(latency_min_ms=5.0, latency_max_ms=20.0, duration_ms=6000.0)


class TestScenarios:
    def test_two_nodes_one_write_converges(self):
        config = SimConfig(seed=4, **BASE)
        script = [
            {"at": 0, "node": "n0", "op": "join"},
            {"at": 50, "node": "n1", "op": "join"},
            {"at": 3000, "node": "n0", "op": "load", "specimen": "s"},
        ]
        sim = run_scenario(config, ["n0", "n1"], script)
        assert len(digests(sim)) == 1
        assert len(sim.hosts["n1"].node.replica.specimens) == 1

    def test_same_seed_identical_trace_hash(self):
        config = SimConfig(seed=11, loss_rate=0.1, reorder=True, **BASE)
        script = [{"at": 0, "node": "n0", "op": "join"}, {"at": 10, "node": "n1", "op": "join"}]
        script += build_random_write_script(5, ["n0", "n1"], 40, 500, 4000)
        h1 = run_scenario(config, ["n0", "n1"], script).trace_hash()
        h2 = run_scenario(config, ["n0", "n1"], script).trace_hash()
        assert h1 == h2

    def test_different_seed_different_trace(self):
        script = [{"at": 0, "node": "n0", "op": "join"}, {"at": 10, "node": "n1", "op": "join"}]
        script += build_random_write_script(5, ["n0", "n1"], 40, 500, 4000)
        h1 = run_scenario(SimConfig(seed=1, loss_rate=0.2, reorder=True, **BASE), ["n0", "n1"], script).trace_hash()
        h2 = run_scenario(SimConfig(seed=2, loss_rate=0.2, reorder=True, **BASE), ["n0", "n1"], script).trace_hash()
        assert h1 != h2

    def test_three_nodes_full_mesh(self):
        config = SimConfig(seed=6, **BASE)
        script = [{"at": i * 100, "node": f"n{i}", "op": "join"} for i in range(3)]
        sim = run_scenario(config, ["n0", "n1", "n2"], script)
        assert len(sim.channel_pairs) == 3  # n(n-1)/2
        assert all(h.node.state == "active" for h in sim.hosts.values())

    def test_first_peer_empty_room(self):
        config = SimConfig(seed=8, **BASE)
        sim = run_scenario(config, ["solo"], [{"at": 0, "node": "solo", "op": "join"}])
        host = sim.hosts["solo"]
        assert host.node.state == "active"
        assert host.node.replica.specimens == {}
        assert len(sim.channel_pairs) == 0

    def test_late_joiner_receives_snapshot(self):
        config = SimConfig(seed=12, loss_rate=0.05, reorder=True, **BASE)
        script = [
            {"at": 0, "node": "n0", "op": "join"},
            {"at": 20, "node": "n1", "op": "join"},
            {"at": 500, "node": "n0", "op": "load", "specimen": "pre"},
            {"at": 600, "node": "n0", "op": "set_viz", "specimen": "pre", "opacity": 0.3},
            {"at": 3000, "node": "late", "op": "join"},
        ]
        sim = run_scenario(config, ["n0", "n1", "late"], script)
        late = sim.hosts["late"].node.replica
        assert "pre" in late.specimens
        assert len(digests(sim)) == 1

    def test_unknown_node_rejected(self):
        with pytest.raises(ScenarioError, match="ghost"):
            run_scenario(SimConfig(seed=1), ["n0"], [{"at": 0, "node": "ghost", "op": "join"}])

    def test_unknown_op_rejected(self):
        with pytest.raises(ScenarioError, match="explode"):
            run_scenario(SimConfig(seed=1), ["n0"], [{"at": 0, "node": "n0", "op": "explode"}])

    def test_lossy_convergence_smoke(self):
        config = SimConfig(
            seed=3, loss_rate=0.05, latency_min_ms=50, latency_max_ms=200,
            reorder=True, duration_ms=20000,
        )
        script = [
            {"at": 0, "node": "n0", "op": "join"},
            {"at": 30, "node": "n1", "op": "join"},
            {"at": 60, "node": "n2", "op": "join"},
        ]
        script += build_random_write_script(99, ["n0", "n1", "n2"], 200, 500, 10000)
        sim = run_scenario(config, ["n0", "n1", "n2"], script)
        assert len(digests(sim)) == 1

    def test_broker_death_does_not_stop_convergence(self):
        config = SimConfig(seed=21, loss_rate=0.05, reorder=True, **BASE)
        script = [
            {"at": 0, "node": "n0", "op": "join"},
            {"at": 30, "node": "n1", "op": "join"},
            {"at": 1000, "node": "n0", "op": "load", "specimen": "s"},
            {"at": 1500, "op": "kill_broker"},
            {"at": 2000, "node": "n0", "op": "set_viz", "specimen": "s", "opacity": 0.1},
            {"at": 2500, "node": "n1", "op": "transform", "specimen": "s", "pos": [1, 2, 3]},
        ]
        sim = run_scenario(config, ["n0", "n1"], script)
        assert not sim.broker_alive
        assert len(digests(sim)) == 1
        rec = sim.hosts["n0"].node.replica.specimens["s"]
        assert rec.transform.position == (1.0, 2.0, 3.0)

    def test_join_with_dead_broker_fails(self):
        config = SimConfig(seed=2, duration_ms=8000)
        script = [
            {"at": 0, "op": "kill_broker"},
            {"at": 10, "node": "n0", "op": "join"},
        ]
        sim = run_scenario(config, ["n0"], script)
        assert sim.hosts["n0"].join_failed is not None

    def test_scenario_file_round_trip(self):
        text = """
        {"seed": 5, "loss_rate": 0.02, "latency_ms": [10, 30], "duplicate_rate": 0.01,
         "reorder": true, "duration_ms": 5000,
         "nodes": ["a", "b"],
         "script": [
            {"at": 0, "node": "a", "op": "join"},
            {"at": 20, "node": "b", "op": "join"},
            {"at": 2000, "node": "a", "op": "load", "specimen": "x"}
         ]}
        """
        config, nodes, script = SimConfig.from_json(text)
        assert config.loss_rate == 0.02
        sim = run_scenario(config, nodes, script)
        assert len(digests(sim)) == 1
