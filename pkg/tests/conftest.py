import numpy as np
import pytest

from gridjoin.data.dataset import Dataset, generate_exponential, generate_uniform, normalize

# Non-empty cells of the 7x7 example grid as (row, column); linear id = 7 * row + column.
EXAMPLE_CELLS = [(0, 2), (1, 1), (2, 0), (2, 4), (3, 2), (3, 3), (4, 4), (4, 6), (5, 1), (6, 5)]
EXAMPLE_CELL_IDS = [2, 8, 14, 18, 23, 24, 32, 34, 36, 47]


def example_grid_points() -> np.ndarray:
    """18 points in the ten shaded cells of a unit-width 7x7 grid."""
    centers = [(r + 0.5, c + 0.5) for r, c in EXAMPLE_CELLS]
    extras = [(r + 0.7, c + 0.6) for r, c in EXAMPLE_CELLS[:8]]
    return np.array(centers + extras, dtype=np.float32)


def pick_epsilon(d: Dataset, selectivity: float, sample: int = 400, seed: int = 0) -> float:
    """Radius at which a point has about ``selectivity`` neighbors besides itself."""
    rng = np.random.default_rng(seed)
    ids = rng.choice(d.count, size=min(sample, d.count), replace=False)
    pts = d.points[ids].astype(np.float64)
    sq = (pts ** 2).sum(axis=1)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2 * pts @ pts.T, 0)
    off = dist2[~np.eye(len(ids), dtype=bool)]
    q = min(1.0, selectivity / (d.count - 1))
    return float(np.sqrt(np.quantile(off, q)))


@pytest.fixture
def example_grid() -> Dataset:
    return Dataset(example_grid_points(), name="example_grid")


@pytest.fixture(scope="session")
def exp6() -> Dataset:
    """500 exponential points in 6 dimensions, normalized."""
    return normalize(generate_exponential(500, 6, lam=40, seed=3))


@pytest.fixture(scope="session")
def exp16() -> Dataset:
    return normalize(generate_exponential(1500, 16, lam=40, seed=11))


@pytest.fixture(scope="session")
def uniform4() -> Dataset:
    return generate_uniform(800, 4, seed=5)
