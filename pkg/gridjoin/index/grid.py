"""Sparse epsilon-grid over the first k dimensions.

Only non-empty cells are materialized. Points are grouped by cell in a lookup array and,
inside each cell, sorted by one extra coordinate ``u`` so the kernel can bound its scan
with a binary search. Storage is one lookup entry per point.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from numba import njit

from gridjoin.data.dataset import Dataset
from gridjoin.errors import ConfigError, IdOverflowError

logger = logging.getLogger(__name__)

MAX_CELL_ID = np.iinfo(np.int64).max


@dataclass(frozen=True, eq=False)
class GridParams:
    """Geometry of the grid: cell edge, indexed dimensions, origin and extent."""
    epsilon: float
    k: int
    n: int
    origin: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).copy()
        widths = np.asarray(self.widths, dtype=np.int64).copy()
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 2 <= self.k <= self.n:
            raise ConfigError(f"k must satisfy 2 <= k <= n, got k={self.k}, n={self.n}")
        if origin.shape != (self.k,) or widths.shape != (self.k,):
            raise ConfigError("origin and widths need one entry per indexed dimension")
        if np.any(widths < 1):
            raise ConfigError("every indexed dimension needs at least one cell")
        total = 1
        for w in widths.tolist():
            total *= w
        if total - 1 > MAX_CELL_ID:
            raise IdOverflowError(
                f"a {self.k}-dimensional grid has {total} cells, more than a 64-bit id can "
                f"address; index fewer dimensions (smaller k)")
        strides = np.ones(self.k, dtype=np.int64)
        for j in range(self.k - 2, -1, -1):
            strides[j] = strides[j + 1] * widths[j + 1]
        for arr in (origin, widths, strides):
            arr.setflags(write=False)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "_strides", strides)
        object.__setattr__(self, "_total", total)

    @property
    def strides(self) -> np.ndarray:
        """Row-major multipliers: ``strides[j] = prod(widths[j+1:])``."""
        return self._strides

    @property
    def total_cells(self) -> int:
        return self._total

    @classmethod
    def from_dataset(cls, d: Dataset, epsilon: float, k: int) -> "GridParams":
        """Fit the grid to the data: origin at the per-dimension minimum."""
        if not 2 <= k <= d.dims:
            raise ConfigError(f"k must satisfy 2 <= k <= n, got k={k}, n={d.dims}")
        if not epsilon > 0:
            raise ConfigError("epsilon must be positive")
        indexed = d.points[:, :k].astype(np.float64)
        origin = indexed.min(axis=0)
        widths = np.floor((indexed.max(axis=0) - origin) / epsilon).astype(np.int64) + 1
        return cls(epsilon=epsilon, k=k, n=d.dims, origin=origin, widths=widths)


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Non-empty cells of a grid and the point lookup array they reference.

    ``cell_ranges[h]`` is the ``[start, end)`` slice of ``point_lookup`` holding the points
    of cell ``cell_ids[h]``; within a slice points are ordered by ``lookup_u``.
    """
    cell_ids: np.ndarray
    cell_ranges: np.ndarray
    point_lookup: np.ndarray
    lookup_u: np.ndarray
    u_dim: int

    @property
    def non_empty_count(self) -> int:
        return int(self.cell_ids.shape[0])

    def cell_points(self, handle: int) -> np.ndarray:
        start, end = self.cell_ranges[handle]
        return self.point_lookup[start:end]


@njit(nogil=True, cache=True)
def _point_cell(p, origin, epsilon, widths, out):
    for j in range(widths.shape[0]):
        c = np.int64(np.floor((np.float64(p[j]) - origin[j]) / epsilon))
        if c < 0:
            c = 0
        elif c >= widths[j]:
            c = widths[j] - 1
        out[j] = c


@njit(nogil=True, cache=True)
def _assign_cells(points, origin, epsilon, widths, strides):
    count = points.shape[0]
    k = widths.shape[0]
    ids = np.empty(count, np.int64)
    coords = np.empty(k, np.int64)
    for i in range(count):
        _point_cell(points[i], origin, epsilon, widths, coords)
        cid = 0
        for j in range(k):
            cid += coords[j] * strides[j]
        ids[i] = cid
    return ids


@njit(nogil=True, cache=True)
def _find_cell(cell_ids, cid):
    """Binary search; returns (handle or -1, probes)."""
    lo = 0
    hi = cell_ids.shape[0]
    probes = 0
    while lo < hi:
        mid = (lo + hi) >> 1
        probes += 1
        if cell_ids[mid] < cid:
            lo = mid + 1
        else:
            hi = mid
    if lo < cell_ids.shape[0] and cell_ids[lo] == cid:
        return lo, probes
    return -1, probes


@njit(nogil=True, cache=True)
def _offset_cell_id(coords, offsets, widths, strides):
    """Linear id of ``coords + offsets``, or -1 when that cell is off the grid."""
    cid = 0
    for j in range(coords.shape[0]):
        c = coords[j] + offsets[j]
        if c < 0 or c >= widths[j]:
            return -1
        cid += c * strides[j]
    return cid


@njit(nogil=True, cache=True)
def _advance_offsets(offsets):
    # odometer over {-1, 0, +1}^k, last dimension fastest
    j = offsets.shape[0] - 1
    while j >= 0:
        offsets[j] += 1
        if offsets[j] <= 1:
            return
        offsets[j] = -1
        j -= 1


@njit(nogil=True, cache=True)
def _adjacent_cells(coords, widths, strides, cell_ids, out):
    k = coords.shape[0]
    offsets = np.full(k, -1, np.int64)
    found = 0
    probes = 0
    for _ in range(3 ** k):
        cid = _offset_cell_id(coords, offsets, widths, strides)
        _advance_offsets(offsets)
        if cid < 0:
            continue
        handle, p = _find_cell(cell_ids, cid)
        probes += p
        if handle >= 0:
            out[found] = handle
            found += 1
    return found, probes


def cell_coords(p: Sequence[float], gp: GridParams) -> np.ndarray:
    """Cell coordinates of a point: ``floor((x_j - origin_j) / eps)`` clamped to the grid."""
    p = np.asarray(p, dtype=np.float32)
    if p.shape[0] < gp.k:
        raise ValueError(f"point has {p.shape[0]} coordinates, grid indexes {gp.k}")
    out = np.empty(gp.k, dtype=np.int64)
    _point_cell(p, gp.origin, gp.epsilon, gp.widths, out)
    return out


def linearize(c: Sequence[int], gp: GridParams) -> int:
    """Row-major id of a cell."""
    c = np.asarray(c, dtype=np.int64)
    if c.shape != (gp.k,) or np.any(c < 0) or np.any(c >= gp.widths):
        raise ValueError(f"cell {c.tolist()} is outside widths {gp.widths.tolist()}")
    return int(np.dot(c, gp.strides))


def delinearize(cell_id: int, gp: GridParams) -> np.ndarray:
    """Inverse of :func:`linearize`."""
    if not 0 <= cell_id < gp.total_cells:
        raise ValueError(f"cell id {cell_id} outside [0, {gp.total_cells})")
    out = np.empty(gp.k, dtype=np.int64)
    rest = int(cell_id)
    for j in range(gp.k):
        out[j], rest = divmod(rest, int(gp.strides[j]))
    return out


def default_u_dim(gp: GridParams) -> int:
    """First un-indexed dimension when one exists, else dimension 0."""
    return gp.k if gp.k < gp.n else 0


def build(d: Dataset, gp: GridParams, u_dim: Optional[int] = None) -> GridIndex:
    """Index the dataset's points over ``gp``.

    Args:
        d: Points to index; ``d.dims`` must equal ``gp.n``.
        gp: Grid geometry (usually ``GridParams.from_dataset`` on the full dataset).
        u_dim: Column used to order points inside each cell. Defaults to the first
            un-indexed column, or column 0 when every dimension is indexed.

    Returns:
        The immutable index.
    """
    if d.dims != gp.n:
        raise ConfigError(f"dataset has {d.dims} dimensions, grid expects {gp.n}")
    u_dim = default_u_dim(gp) if u_dim is None else int(u_dim)
    if not 0 <= u_dim < d.dims:
        raise ConfigError(f"u_dim {u_dim} outside [0, {d.dims})")

    ids = _assign_cells(d.points, gp.origin, gp.epsilon, gp.widths, gp.strides)
    u_values = d.points[:, u_dim]
    order = np.lexsort((np.arange(d.count), u_values, ids))
    sorted_ids = ids[order]
    cell_ids, starts = np.unique(sorted_ids, return_index=True)
    ends = np.append(starts[1:], d.count)
    cell_ranges = np.stack([starts, ends], axis=1).astype(np.int64)
    lookup_u = np.ascontiguousarray(u_values[order], dtype=np.float32)

    index = GridIndex(
        cell_ids=cell_ids.astype(np.int64),
        cell_ranges=cell_ranges,
        point_lookup=order.astype(np.int64),
        lookup_u=lookup_u,
        u_dim=u_dim,
    )
    logger.debug("Indexed %d points into %d non-empty cells (k=%d, u=%d)",
                 d.count, index.non_empty_count, gp.k, u_dim)
    return index


def adjacent_non_empty(c: Sequence[int], g: GridIndex, gp: GridParams) -> List[int]:
    """Handles of the non-empty cells among ``c`` and its up to ``3^k - 1`` neighbors.

    Handles index ``g.cell_ids``; they come back in row-major offset order, which is
    ascending cell-id order.
    """
    coords = np.asarray(c, dtype=np.int64)
    out = np.empty(min(3 ** gp.k, max(g.non_empty_count, 1)), dtype=np.int64)
    found, _ = _adjacent_cells(coords, gp.widths, gp.strides, g.cell_ids, out)
    return out[:found].tolist()


def neighborhood_size(c: Sequence[int], gp: GridParams) -> int:
    """Number of in-grid cells in the 3^k box around ``c``, empty or not."""
    size = 1
    for cj, wj in zip(np.asarray(c, dtype=np.int64).tolist(), gp.widths.tolist()):
        size *= min(cj + 1, wj - 1) - max(cj - 1, 0) + 1
    return size


def search_loss(n: int, k: int) -> float:
    """Fraction of the 3^n adjacent cells skipped by indexing only k dimensions."""
    if not 2 <= k <= n:
        raise ConfigError(f"k must satisfy 2 <= k <= n, got k={k}, n={n}")
    return (3 ** n - 3 ** k) / 3 ** n


def search_cost(count: int, k: int, non_empty: int) -> float:
    """Memory operations to look up every point's neighbor cells: |D| 3^k log2|G|."""
    return float(count) * 3 ** k * float(np.log2(max(non_empty, 1)))

