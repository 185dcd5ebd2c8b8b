import numpy as np
import pytest

from gridjoin.data.dataset import (
    PRESETS,
    Dataset,
    DimStats,
    cells_per_dimension,
    estimate_variance,
    export_dataset,
    generate_exponential,
    generate_preset,
    generate_uniform,
    load_dataset,
    normalize,
    reorder_by_variance,
)
from gridjoin.errors import DatasetFormatError, SampleTooSmallError


class TestLoad:
    def test_csv(self, tmp_path):
        path = tmp_path / "pts.csv"
        path.write_text("0.1,0.2\n0.3,0.4\n")
        d = load_dataset(path, "csv", 2)
        assert d.count == 2
        assert d.dims == 2
        np.testing.assert_array_equal(d.points, np.array([[0.1, 0.2], [0.3, 0.4]], np.float32))

    def test_csv_whitespace_and_blank_lines(self, tmp_path):
        path = tmp_path / "pts.txt"
        path.write_text("1 2\n\n3\t4\n")
        assert load_dataset(path, "csv", 2).count == 2

    def test_csv_dimension_mismatch(self, tmp_path):
        path = tmp_path / "pts.csv"
        path.write_text("0.1,0.2\n0.1,0.2,0.3\n")
        with pytest.raises(DatasetFormatError, match="dimension mismatch") as err:
            load_dataset(path, "csv", 2)
        assert err.value.row == 1

    def test_csv_header_rejected(self, tmp_path):
        path = tmp_path / "pts.csv"
        path.write_text("x,y\n0.1,0.2\n")
        with pytest.raises(DatasetFormatError) as err:
            load_dataset(path, "csv", 2)
        assert err.value.row == 0

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DatasetFormatError, match="no points"):
            load_dataset(path, "csv", 2)

    def test_f32(self, tmp_path):
        path = tmp_path / "pts.f32"
        np.arange(8, dtype="<f4").tofile(path)
        d = load_dataset(path, "f32", 4)
        assert d.count == 2
        assert d.points[1, 3] == 7.0

    def test_f32_bad_length(self, tmp_path):
        path = tmp_path / "pts.f32"
        np.arange(7, dtype="<f4").tofile(path)
        with pytest.raises(DatasetFormatError, match="multiple"):
            load_dataset(path, "f32", 4)

    def test_non_finite(self, tmp_path):
        path = tmp_path / "pts.csv"
        path.write_text("0.1,0.2\nnan,0.3\n")
        with pytest.raises(DatasetFormatError, match="non-finite"):
            load_dataset(path, "csv", 2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope.csv", "csv", 2)

    @pytest.mark.parametrize("fmt", ["csv", "f32"])
    def test_export_reads_back(self, tmp_path, fmt):
        d = generate_uniform(20, 3, seed=1)
        path = export_dataset(d, tmp_path / f"d.{fmt}", fmt)
        np.testing.assert_array_equal(load_dataset(path, fmt, 3).points, d.points)


class TestDataset:
    def test_immutable(self):
        d = Dataset(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            d.points[0, 0] = 1.0

    def test_default_perm(self):
        assert Dataset(np.zeros((1, 3))).perm.tolist() == [0, 1, 2]

    def test_bad_perm(self):
        with pytest.raises(ValueError, match="permutation"):
            Dataset(np.zeros((1, 3)), perm=[0, 0, 1])

    def test_subset_keeps_perm(self):
        d = Dataset(np.arange(12).reshape(4, 3), perm=[2, 0, 1])
        sub = d.subset([3, 1])
        assert sub.count == 2
        assert sub.perm.tolist() == [2, 0, 1]
        assert sub.points[0, 0] == 9.0


class TestNormalize:
    def test_affine(self):
        d = normalize(Dataset(np.array([[2.0], [4.0], [6.0]])))
        np.testing.assert_array_equal(d.points[:, 0], [0.0, 0.5, 1.0])

    def test_constant_dimension(self):
        d = normalize(Dataset(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])))
        np.testing.assert_array_equal(d.points[:, 0], [0.0, 0.0, 0.0])

    def test_unit_range_unchanged(self):
        pts = np.array([[0.0, 1.0], [0.25, 0.5], [1.0, 0.0]], dtype=np.float32)
        np.testing.assert_array_equal(normalize(Dataset(pts)).points, pts)

    def test_idempotent(self):
        once = normalize(generate_exponential(300, 5, seed=2))
        np.testing.assert_array_equal(normalize(once).points, once.points)

    def test_range(self):
        d = normalize(generate_exponential(1000, 4, seed=9))
        assert d.points.min() == 0.0
        assert d.points.max() == 1.0


class TestGenerate:
    def test_deterministic(self):
        a = generate_exponential(100, 2, lam=40, seed=7)
        b = generate_exponential(100, 2, lam=40, seed=7)
        np.testing.assert_array_equal(a.points, b.points)

    def test_exponential_mean(self):
        d = generate_exponential(20_000, 5, lam=40, seed=0)
        # 1e5 samples: standard error of the mean is 0.025 / sqrt(1e5)
        assert abs(d.points.mean() - 0.025) < 3 * 0.025 / np.sqrt(1e5)
        assert d.points.max() <= 1.0

    def test_exponential_redraws_above_one(self):
        d = generate_exponential(10_000, 4, lam=1.0, seed=3)
        assert d.points.max() <= 1.0
        # truncated to [0, 1]: mean 1 - 1/(e - 1); clamping would give 1 - 1/e
        assert abs(d.points.mean() - (1 - 1 / (np.e - 1))) < 0.01

    def test_uniform_range(self):
        d = generate_uniform(1000, 3, seed=0)
        assert d.points.min() >= 0.0
        assert d.points.max() < 1.0

    def test_preset(self):
        d = generate_preset("syn16", count=50)
        assert (d.count, d.dims, d.name) == (50, 16, "syn16")
        assert PRESETS["syn32"].count == 2_000_000

    def test_real_preset_not_generated(self):
        with pytest.raises(ValueError):
            generate_preset("susy")

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            generate_exponential(0, 2)
        with pytest.raises(ValueError):
            generate_exponential(10, 2, lam=0)


class TestVariance:
    def test_two_points(self):
        stats = estimate_variance(Dataset(np.array([[0.0], [1.0]])), fraction=1.0)
        assert stats.variance[0] == pytest.approx(0.5)
        assert stats.sample_size == 2

    def test_constant_dimension(self):
        d = Dataset(np.column_stack([np.full(10, 0.3), np.linspace(0, 1, 10)]))
        assert estimate_variance(d, fraction=1.0).variance[0] == 0.0

    def test_sample_too_small(self):
        with pytest.raises(SampleTooSmallError):
            estimate_variance(generate_uniform(100, 2), fraction=0.005)

    def test_deterministic(self, exp16):
        a = estimate_variance(exp16, 0.1, seed=4)
        b = estimate_variance(exp16, 0.1, seed=4)
        np.testing.assert_array_equal(a.variance, b.variance)

    @pytest.mark.slow
    def test_one_percent_sample_close_to_population(self):
        d = generate_exponential(500_000, 16, lam=40, seed=1)
        sampled = estimate_variance(d, 0.01, seed=0).variance
        full = d.points.astype(np.float64).var(axis=0, ddof=1)
        assert np.all(np.abs(sampled - full) <= 0.2 * full)

    def test_stats_validation(self):
        with pytest.raises(ValueError):
            DimStats(variance=[-1.0], sample_fraction=0.5)
        with pytest.raises(ValueError):
            DimStats(variance=[1.0], sample_fraction=0.0)


class TestReorder:
    def test_six_dimension_example(self):
        # variance rank per dimension (1 = highest): 5, 6, 2, 4, 1, 3
        variance = np.array([2.0, 1.0, 5.0, 3.0, 6.0, 4.0])
        d = Dataset(np.random.default_rng(0).random((4, 6)))
        out = reorder_by_variance(d, DimStats(variance, 1.0))
        assert (out.perm + 1).tolist() == [5, 3, 6, 4, 1, 2]
        np.testing.assert_array_equal(out.points[:, 0], d.points[:, 4])

    def test_identity_when_sorted(self):
        d = Dataset(np.random.default_rng(0).random((4, 3)))
        out = reorder_by_variance(d, DimStats(np.array([3.0, 2.0, 1.0]), 1.0))
        assert out.perm.tolist() == [0, 1, 2]

    def test_ties_keep_lower_index_first(self):
        d = Dataset(np.zeros((2, 3)))
        out = reorder_by_variance(d, DimStats(np.array([1.0, 2.0, 1.0]), 1.0))
        assert out.perm.tolist() == [1, 0, 2]

    def test_perm_orders_variance(self, exp16):
        stats = estimate_variance(exp16, 0.5)
        out = reorder_by_variance(exp16, stats)
        assert np.all(np.diff(stats.variance[out.perm]) <= 0)

    def test_distance_preserved(self):
        d = Dataset(np.array([[0.1, 0.9, 0.4], [0.3, 0.2, 0.8]]))
        stats = DimStats(np.array([1.0, 3.0, 2.0]), 1.0)
        out = reorder_by_variance(d, stats)
        before = np.sqrt(np.sort((d.points[0] - d.points[1]) ** 2).sum())
        after = np.sqrt(np.sort((out.points[0] - out.points[1]) ** 2).sum())
        assert before == after

    def test_dimension_count_checked(self):
        with pytest.raises(ValueError):
            reorder_by_variance(Dataset(np.zeros((2, 3))), DimStats(np.ones(2), 1.0))


def test_cells_per_dimension():
    d = Dataset(np.array([[0.0, 0.0], [1.0, 0.25]]))
    assert cells_per_dimension(d, 0.1).tolist() == [11, 3]
