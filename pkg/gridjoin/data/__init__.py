from gridjoin.data.dataset import (
    PRESETS,
    Dataset,
    DatasetPreset,
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

__all__ = [
    "PRESETS",
    "Dataset",
    "DatasetPreset",
    "DimStats",
    "cells_per_dimension",
    "estimate_variance",
    "export_dataset",
    "generate_exponential",
    "generate_preset",
    "generate_uniform",
    "load_dataset",
    "normalize",
    "reorder_by_variance",
]
