"""Point datasets: ingestion, normalization, synthetic generation and variance reordering."""

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from gridjoin.errors import DatasetFormatError, SampleTooSmallError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "f32")
_DELIMITER = re.compile(r"[,\s]+")


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable set of points in row-major float32 layout.

    ``perm[j]`` is the original (input file) dimension stored at column ``j``; it is the
    identity unless the dataset went through :func:`reorder_by_variance`.
    """
    points: np.ndarray
    perm: Optional[np.ndarray] = None
    name: str = "dataset"

    def __post_init__(self):
        points = np.ascontiguousarray(self.points, dtype=np.float32)
        if points.ndim != 2:
            raise ValueError("points must be a 2-D array of shape (count, dims)")
        if points.shape[0] < 1:
            raise ValueError("a dataset needs at least one point")
        if points.shape[1] < 1:
            raise ValueError("a dataset needs at least one dimension")
        points.setflags(write=False)
        perm = np.arange(points.shape[1], dtype=np.int64) if self.perm is None \
            else np.asarray(self.perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(points.shape[1])):
            raise ValueError("perm must be a permutation of the dimension indices")
        perm.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "perm", perm)

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    @property
    def dims(self) -> int:
        return int(self.points.shape[1])

    def subset(self, ids: np.ndarray, name: Optional[str] = None) -> "Dataset":
        """Rows ``ids`` as a new dataset with the same dimension permutation."""
        return Dataset(self.points[np.asarray(ids, dtype=np.int64)], perm=self.perm,
                       name=name or self.name)


@dataclass(frozen=True, eq=False)
class DimStats:
    """Per-dimension sample variance."""
    variance: np.ndarray
    sample_fraction: float
    sample_size: int = 0

    def __post_init__(self):
        variance = np.asarray(self.variance, dtype=np.float64)
        if np.any(variance < 0):
            raise ValueError("variance must be non-negative")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must be in (0, 1]")
        object.__setattr__(self, "variance", variance)


@dataclass(frozen=True)
class DatasetPreset:
    """Shape of a benchmark dataset; synthetic presets can be generated."""
    name: str
    count: int
    dims: int
    kind: str = "real"
    description: str = field(default="", compare=False)


PRESETS: Dict[str, DatasetPreset] = {
    p.name: p for p in (
        DatasetPreset("cooctexture", 68_040, 16, description="Co-occurrence texture features"),
        DatasetPreset("colorhist", 68_040, 32, description="Color histogram features"),
        DatasetPreset("layouthist", 66_616, 32, description="Layout histogram features"),
        DatasetPreset("susy", 5_000_000, 18, description="Supersymmetry particle kinematics"),
        DatasetPreset("songs", 515_345, 90, description="Song prediction features"),
        DatasetPreset("syn16", 2_000_000, 16, kind="exponential"),
        DatasetPreset("syn32", 2_000_000, 32, kind="exponential"),
        DatasetPreset("syn64", 2_000_000, 64, kind="exponential"),
    )
}


def _parse_csv(path: Path, dims: int) -> np.ndarray:
    rows = []
    with open(path) as f:
        for row_index, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            fields = [v for v in _DELIMITER.split(line) if v]
            if len(fields) != dims:
                raise DatasetFormatError(
                    f"dimension mismatch: expected {dims} values, found {len(fields)}",
                    row=row_index)
            try:
                rows.append([float(v) for v in fields])
            except ValueError:
                raise DatasetFormatError(f"non-numeric value in {line!r}", row=row_index)
    if not rows:
        raise DatasetFormatError(f"{path} contains no points")
    return np.asarray(rows, dtype=np.float32)


def _parse_f32(path: Path, dims: int) -> np.ndarray:
    size = path.stat().st_size
    if size == 0:
        raise DatasetFormatError(f"{path} contains no points")
    if size % (4 * dims):
        raise DatasetFormatError(
            f"dimension mismatch: {size} bytes is not a multiple of 4 * {dims}")
    values = np.fromfile(path, dtype="<f4")
    return values.reshape(-1, dims).astype(np.float32)


def load_dataset(path: Union[str, Path], fmt: str, dims: int) -> Dataset:
    """Read raw (unnormalized) points from a CSV or little-endian float32 file.

    CSV rows may use commas or whitespace between values; header rows are rejected.
    """
    path = Path(path)
    if dims < 1:
        raise DatasetFormatError("dims must be >= 1")
    if fmt not in FORMATS:
        raise DatasetFormatError(f"unknown format {fmt!r}, expected one of {FORMATS}")
    if not path.exists():
        raise FileNotFoundError(path)
    points = _parse_csv(path, dims) if fmt == "csv" else _parse_f32(path, dims)
    if not np.all(np.isfinite(points)):
        bad = int(np.argwhere(~np.isfinite(points))[0, 0])
        raise DatasetFormatError("non-finite coordinate", row=bad)
    logger.info("Loaded %d points in %d dimensions from %s", points.shape[0], dims, path)
    return Dataset(points, name=path.stem)


def export_dataset(d: Dataset, path: Union[str, Path], fmt: str) -> Path:
    """Write points in one of the formats :func:`load_dataset` reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        np.savetxt(path, d.points, delimiter=",", fmt="%.9g")
    elif fmt == "f32":
        d.points.astype("<f4").tofile(path)
    else:
        raise DatasetFormatError(f"unknown format {fmt!r}, expected one of {FORMATS}")
    return path


def normalize(d: Dataset) -> Dataset:
    """Map every dimension affinely onto [0, 1]; constant dimensions become 0."""
    raw = d.points.astype(np.float64)
    lo = raw.min(axis=0)
    span = raw.max(axis=0) - lo
    scaled = np.zeros_like(raw)
    live = span > 0
    scaled[:, live] = (raw[:, live] - lo[live]) / span[live]
    return Dataset(scaled.astype(np.float32), perm=d.perm, name=d.name)


def generate_exponential(count: int, dims: int, lam: float = 40.0, seed: int = 0) -> Dataset:
    """Draw i.i.d. exponential(lam) coordinates, redrawing any sample above 1."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    rng = np.random.default_rng(seed)
    values = rng.exponential(scale=1.0 / lam, size=(count, dims))
    outside = values > 1.0
    while outside.any():
        values[outside] = rng.exponential(scale=1.0 / lam, size=int(outside.sum()))
        outside = values > 1.0
    return Dataset(values.astype(np.float32), name=f"exp{dims}")


def generate_uniform(count: int, dims: int, seed: int = 0) -> Dataset:
    """Draw i.i.d. uniform [0, 1) coordinates."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return Dataset(rng.random((count, dims), dtype=np.float32), name=f"uniform{dims}")


def generate_preset(name: str, count: Optional[int] = None, seed: int = 0,
                    lam: float = 40.0) -> Dataset:
    """Generate a synthetic preset, optionally at a reduced point count."""
    preset = PRESETS.get(name)
    if preset is None or preset.kind != "exponential":
        raise ValueError(f"{name!r} is not a synthetic preset")
    d = generate_exponential(count or preset.count, preset.dims, lam=lam, seed=seed)
    return Dataset(d.points, name=preset.name)


def estimate_variance(d: Dataset, fraction: float = 0.01, seed: int = 0) -> DimStats:
    """Sample variance per dimension over a seeded sample drawn without replacement."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    size = math.ceil(fraction * d.count)
    if size < 2:
        raise SampleTooSmallError(
            f"a {fraction} sample of {d.count} points has {size} point(s), need 2")
    rng = np.random.default_rng(seed)
    sample = rng.permutation(d.count)[:size]
    variance = d.points[sample].astype(np.float64).var(axis=0, ddof=1)
    return DimStats(variance=variance, sample_fraction=fraction, sample_size=size)


def reorder_by_variance(d: Dataset, stats: DimStats) -> Dataset:
    """Permute dimensions into descending variance order, ties by lower index."""
    if stats.variance.shape[0] != d.dims:
        raise ValueError(f"stats cover {stats.variance.shape[0]} dims, dataset has {d.dims}")
    order = np.argsort(-stats.variance, kind="stable")
    logger.debug("Variance order: %s", order.tolist())
    return Dataset(d.points[:, order], perm=d.perm[order], name=d.name)


def cells_per_dimension(d: Dataset, epsilon: float) -> np.ndarray:
    """Number of epsilon-wide grid cells each dimension spans."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    raw = d.points.astype(np.float64)
    return (np.floor((raw.max(axis=0) - raw.min(axis=0)) / epsilon) + 1).astype(np.int64)
