import csv

import numpy as np
import pytest

from gridjoin.data.dataset import Dataset
from gridjoin.distributed import (
    JoinParams,
    PartitionConfig,
    PartitionSimulator,
    PartitionTrace,
    ReplicatedSimulator,
    RingSimulator,
    assign_batches,
    communication_curve,
    entity_batches,
    entity_stripes,
    project_speedup,
    run_replicated,
    run_ring,
    work_histogram,
    write_trace,
)
from gridjoin.errors import PartitionConfigError
from gridjoin.index.grid import GridParams, build
from gridjoin.join.batching import NeighborTable
from gridjoin.join.kernel import run_kernel
from gridjoin.join.oracle import brute_join
from gridjoin.settings import SimulationSettings

PARAMS = JoinParams(epsilon=0.12, k=3, sortidu=True, shortc=True)


def single_node_table(d, params):
    gp = GridParams.from_dataset(d, params.epsilon, params.k)
    buf = run_kernel(range(d.count), d, build(d, gp), gp, params.kernel_config())
    return NeighborTable.from_buffers(d.count, [buf])


class TestPartitionConfig:
    def test_batches_per_node(self):
        assert PartitionConfig(4, 32).batches_per_node == 8

    @pytest.mark.parametrize("nodes,batches,mode", [(3, 32, "replicated"), (0, 4, "ring"),
                                                    (2, 0, "ring"), (2, 4, "mesh")])
    def test_invalid(self, nodes, batches, mode):
        with pytest.raises(PartitionConfigError):
            PartitionConfig(nodes, batches, mode)


class TestAssignment:
    def test_round_robin(self):
        assignment = assign_batches(PartitionConfig(4, 32))
        assert assignment[0] == [0, 4, 8, 12, 16, 20, 24, 28]
        assert assignment[3] == [3, 7, 11, 15, 19, 23, 27, 31]
        assert all(len(b) == 8 for b in assignment.values())

    def test_entity_batches_partition_ids(self):
        batches = entity_batches(103, 8, seed=2)
        ids = np.concatenate(batches)
        assert sorted(ids.tolist()) == list(range(103))
        assert all(np.all(np.diff(b) > 0) for b in batches)
        sizes = [b.size for b in batches]
        assert max(sizes) - min(sizes) <= 1

    def test_entity_batches_seeded(self):
        a, b = entity_batches(50, 5, seed=1), entity_batches(50, 5, seed=1)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_stripes_never_empty(self):
        stripes = entity_stripes(5, 4)
        assert [s.size for s in stripes] == [2, 1, 1, 1]

    def test_more_nodes_than_points(self):
        with pytest.raises(PartitionConfigError):
            entity_stripes(3, 4)


class TestReplicated:
    def test_equals_single_node(self, uniform4):
        trace, table = run_replicated(uniform4, PartitionConfig(4, 32), PARAMS, seed=1)
        assert table.identical(single_node_table(uniform4, PARAMS))
        assert trace.total_comm == 0
        assert [w.batch for w in trace.batch_work] == list(range(32))

    def test_work_is_conserved(self, uniform4):
        trace, table = run_replicated(uniform4, PartitionConfig(4, 32), PARAMS)
        gp = GridParams.from_dataset(uniform4, PARAMS.epsilon, PARAMS.k)
        whole = run_kernel(range(uniform4.count), uniform4, build(uniform4, gp), gp,
                           PARAMS.kernel_config())
        work = trace.node_work()
        assert sum(t for t, _ in work.values()) == whole.counters.distance_tests
        assert sum(p for _, p in work.values()) == table.total_pairs
        assert sum(w.queries for w in trace.batch_work) == uniform4.count

    def test_batches_run_on_their_node(self, uniform4):
        trace, _ = run_replicated(uniform4, PartitionConfig(4, 8), PARAMS)
        assert all(w.node == w.batch % 4 for w in trace.batch_work)

    def test_wrong_mode(self, uniform4):
        with pytest.raises(PartitionConfigError):
            run_replicated(uniform4, PartitionConfig(2, 2, "ring"), PARAMS)


class TestRing:
    @pytest.mark.parametrize("p", [2, 4, 8])
    def test_communication_volume(self, uniform4, p):
        trace, _ = run_ring(uniform4, PartitionConfig(p, p, "ring"), PARAMS)
        assert trace.total_comm == (p - 1) * uniform4.count
        share = uniform4.count - uniform4.count // p
        for node in range(p):
            assert trace.sent_by(node) == share
            assert trace.received_by(node) == share
        assert len(trace.round_times) == p - 1

    @pytest.mark.parametrize("p", [1, 2, 4, 8])
    def test_union_matches_oracle(self, uniform4, p):
        _, table = run_ring(uniform4, PartitionConfig(p, p, "ring"), PARAMS, seed=p)
        assert brute_join(uniform4, PARAMS.epsilon).matches(table)

    def test_six_points_two_nodes(self):
        pts = np.array([[0.0, 0.0], [0.05, 0.0], [0.5, 0.5],
                        [0.52, 0.5], [0.9, 0.9], [0.0, 0.06]])
        d = Dataset(pts)
        params = JoinParams(epsilon=0.1, k=2)
        trace, table = run_ring(d, PartitionConfig(2, 2, "ring"), params)
        assert table.identical(brute_join(d, 0.1).to_table())
        assert trace.total_comm == 6
        assert trace.round_sends(1) == 6
        assert [w.batch for w in trace.batch_work] == [0, 0, 1, 1]

    def test_round_time_model(self, uniform4):
        trace, _ = run_ring(uniform4, PartitionConfig(4, 4, "ring"), PARAMS,
                            alpha=1e-3, beta=1e6, element_bytes=4)
        expected = 1e-3 + 200 * 4 * 4 / 1e6
        assert trace.round_times == pytest.approx([expected] * 3)
        assert trace.comm_seconds == pytest.approx(3 * expected)

    def test_single_node_sends_nothing(self, uniform4):
        trace, _ = run_ring(uniform4, PartitionConfig(1, 1, "ring"), PARAMS)
        assert trace.total_comm == 0
        assert trace.comm_seconds == 0.0


class TestProjection:
    def test_one_heavy_batch(self):
        weights = [2.0] + [1.0] * 7
        rows = project_speedup(weights, [1, 8])
        assert rows[0].speedup == 1.0
        assert rows[1].makespan == 2.0
        assert rows[1].speedup == pytest.approx(4.5)

    def test_balanced(self):
        rows = project_speedup([1.0] * 32, [1, 2, 4, 8])
        assert [r.speedup for r in rows] == [1.0, 2.0, 4.0, 8.0]

    def test_from_trace(self, uniform4):
        trace, _ = run_replicated(uniform4, PartitionConfig(2, 8), PARAMS)
        rows = project_speedup(trace, [1, 2])
        assert rows[0].makespan == trace.batch_weights().sum()
        assert 1.0 <= rows[1].speedup <= 2.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            project_speedup([], [2])
        with pytest.raises(PartitionConfigError):
            project_speedup([1.0], [0])

    def test_histogram(self):
        counts, edges = work_histogram([1, 1, 2, 10], bins=3)
        assert counts.tolist() == [3, 0, 1]
        assert edges[0] == 1 and edges[-1] == 10

    def test_communication_curve(self):
        rows = communication_curve(1000, 4, [1, 2, 5], alpha=1e-3, beta=1e6)
        assert [r.rounds for r in rows] == [0, 1, 4]
        assert [r.elements for r in rows] == [0, 1000, 4000]
        assert rows[0].seconds == 0.0
        assert rows[2].seconds == pytest.approx(4 * (1e-3 + 200 * 4 * 4 / 1e6))


class TestSimulators:
    def test_from_config_replicated(self, uniform4):
        sim = PartitionSimulator.from_config(SimulationSettings(nodes=2, batches=4), PARAMS)
        assert isinstance(sim, ReplicatedSimulator)
        trace, table = sim.run(uniform4)
        assert trace.mode == "replicated"
        assert table.identical(single_node_table(uniform4, PARAMS))

    def test_from_config_ring(self, uniform4):
        settings = SimulationSettings(mode="ring", nodes=4, batches=4, alpha=0.0, beta=1.0)
        sim = PartitionSimulator.from_config(settings, PARAMS)
        assert isinstance(sim, RingSimulator)
        trace, _ = sim.run(uniform4)
        assert trace.round_times == pytest.approx([200 * 4 * 4] * 3)

    def test_mode_mismatch(self):
        with pytest.raises(PartitionConfigError):
            RingSimulator(PartitionConfig(2, 2, "replicated"), PARAMS)


def test_write_trace(tmp_path, uniform4):
    trace, _ = run_ring(uniform4, PartitionConfig(2, 2, "ring"), PARAMS)
    speedups = project_speedup([1.0, 1.0], [1, 2])
    paths = write_trace(trace, tmp_path / "trace", speedups)
    assert [p.name for p in paths] == ["comm.csv", "work.csv", "speedup.csv"]
    with open(paths[0]) as f:
        rows = list(csv.DictReader(f))
    assert rows == [{"round": "1", "src": "1", "dst": "0", "elements": "400"},
                    {"round": "1", "src": "0", "dst": "1", "elements": "400"}]
    assert isinstance(trace, PartitionTrace)
