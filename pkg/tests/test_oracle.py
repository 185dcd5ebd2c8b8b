import numpy as np
import pytest

from gridjoin.data.dataset import Dataset, DimStats, generate_uniform, reorder_by_variance
from gridjoin.errors import OracleSizeError
from gridjoin.join.batching import NeighborTable
from gridjoin.join.oracle import OraclePairs, brute_join


def test_one_dimensional_example():
    d = Dataset(np.array([[0.0], [0.1], [0.5]]))
    truth = brute_join(d, 0.15)
    assert truth.pairs.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1], [2, 2]]
    assert truth.total_pairs == 5


def test_single_point():
    assert brute_join(Dataset(np.array([[0.4, 0.2]])), 0.01).pairs.tolist() == [[0, 0]]


def test_radius_covering_unit_cube_joins_everything():
    d = generate_uniform(40, 3, seed=6)
    assert brute_join(d, np.sqrt(3.0)).total_pairs == 40 * 40


def test_symmetric_and_sorted():
    truth = brute_join(generate_uniform(200, 4, seed=1), 0.25)
    pairs = set(map(tuple, truth.pairs.tolist()))
    assert all((b, a) in pairs for a, b in pairs)
    order = np.lexsort((truth.pairs[:, 1], truth.pairs[:, 0]))
    assert np.array_equal(order, np.arange(truth.total_pairs))


def test_size_guard():
    with pytest.raises(OracleSizeError):
        brute_join(generate_uniform(11, 2), 0.1, guard=10)


def test_dimension_order_does_not_matter():
    d = generate_uniform(150, 5, seed=2)
    shuffled = reorder_by_variance(d, DimStats(np.array([1.0, 5.0, 2.0, 4.0, 3.0]), 1.0))
    assert brute_join(d, 0.3).matches(brute_join(shuffled, 0.3))


def test_matches_accepts_tables_and_arrays():
    truth = brute_join(Dataset(np.array([[0.0], [0.1], [0.5]])), 0.15)
    table = NeighborTable(offsets=[0, 2, 4, 5], neighbor_ids=[1, 0, 0, 1, 2])
    assert truth.matches(table)
    assert truth.matches(truth.pairs[::-1])
    assert truth.matches(truth.to_table())
    assert not truth.matches(OraclePairs(pairs=truth.pairs[:-1], count=3))
