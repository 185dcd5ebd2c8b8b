from gridjoin.index.grid import (
    GridIndex,
    GridParams,
    adjacent_non_empty,
    build,
    cell_coords,
    delinearize,
    linearize,
    neighborhood_size,
    search_cost,
    search_loss,
)

__all__ = [
    "GridIndex",
    "GridParams",
    "adjacent_non_empty",
    "build",
    "cell_coords",
    "delinearize",
    "linearize",
    "neighborhood_size",
    "search_cost",
    "search_loss",
]
