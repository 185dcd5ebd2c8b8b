"""Configuration loading.

Defaults ship as ``gridjoin/config/config.yaml``. A user file only needs the keys it
overrides; everything else falls back to the packaged defaults.
"""

import copy
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from gridjoin.errors import ConfigError

logger = logging.getLogger(__name__)

PACKAGE_CONFIG = Path(__file__).parent / "config" / "config.yaml"
SEARCH_PATHS = ("config/config.yaml", "gridjoin/config/config.yaml")


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _read_yaml(path: Path) -> Dict[str, Any]:
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return data


def default_config() -> Dict[str, Any]:
    """Return the packaged defaults."""
    return _read_yaml(PACKAGE_CONFIG)


def find_config(path: Optional[Union[str, Path]] = None) -> Optional[Path]:
    """Resolve the config file to use, trying the usual locations."""
    if path is not None:
        return Path(path)
    for candidate in SEARCH_PATHS:
        if Path(candidate).exists():
            return Path(candidate)
    return None


def load_config(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """Load a config file merged over the packaged defaults.

    Args:
        path: Explicit config path. When omitted, ``config/config.yaml`` and
            ``gridjoin/config/config.yaml`` are tried relative to the working directory.

    Returns:
        Configuration dictionary with every section present.
    """
    config = default_config()
    resolved = find_config(path)
    if resolved is None:
        return config
    if not resolved.exists():
        logger.warning("Config file not found at %s, using defaults", resolved)
        return config
    logger.debug("Loading config from %s", resolved)
    return _merge(config, _read_yaml(resolved))


@dataclass(frozen=True)
class JoinSettings:
    """Join parameters from the ``join`` section."""
    epsilon: float
    k: int
    reorder: bool = False
    sortidu: bool = False
    shortc: bool = False

    @staticmethod
    def from_config(config: Dict[str, Any]) -> "JoinSettings":
        section = config.get("join", {})
        return JoinSettings(
            epsilon=float(section.get("epsilon", 0.05)),
            k=int(section.get("k", 6)),
            reorder=bool(section.get("reorder", False)),
            sortidu=bool(section.get("sortidu", False)),
            shortc=bool(section.get("shortc", False)),
        )


@dataclass(frozen=True)
class BatchSettings:
    """Batch planning and pipeline parameters from the ``batching`` section."""
    batch_size: int = 100_000_000
    min_batches: int = 3
    sample_fraction: float = 0.01
    pipeline_depth: int = 3
    overflow_factor: float = 2.0

    @staticmethod
    def from_config(config: Dict[str, Any]) -> "BatchSettings":
        section = config.get("batching", {})
        settings = BatchSettings(
            batch_size=int(section.get("batch_size", 100_000_000)),
            min_batches=int(section.get("min_batches", 3)),
            sample_fraction=float(section.get("sample_fraction", 0.01)),
            pipeline_depth=int(section.get("pipeline_depth", 3)),
            overflow_factor=float(section.get("overflow_factor", 2.0)),
        )
        if settings.batch_size < 1:
            raise ConfigError("batching.batch_size must be >= 1")
        if not 0.0 < settings.sample_fraction <= 1.0:
            raise ConfigError("batching.sample_fraction must be in (0, 1]")
        if settings.overflow_factor < 1.0:
            raise ConfigError("batching.overflow_factor must be >= 1")
        return settings


@dataclass(frozen=True)
class SimulationSettings:
    """Partitioning simulator parameters from the ``simulation`` section."""
    mode: str = "replicated"
    nodes: int = 4
    batches: int = 32
    alpha: float = 5e-5
    beta: float = 5e9
    element_bytes: int = 4

    @staticmethod
    def from_config(config: Dict[str, Any]) -> "SimulationSettings":
        section = config.get("simulation", {})
        settings = SimulationSettings(
            mode=str(section.get("mode", "replicated")).lower(),
            nodes=int(section.get("nodes", 4)),
            batches=int(section.get("batches", 32)),
            alpha=float(section.get("alpha", 5e-5)),
            beta=float(section.get("beta", 5e9)),
            element_bytes=int(section.get("element_bytes", 4)),
        )
        if settings.mode not in ("replicated", "ring"):
            raise ConfigError(f"Unknown simulation mode: {settings.mode}")
        if settings.beta <= 0:
            raise ConfigError("simulation.beta must be positive")
        return settings
