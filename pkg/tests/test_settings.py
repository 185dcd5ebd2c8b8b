import pytest

from gridjoin.errors import ConfigError
from gridjoin.settings import (
    BatchSettings,
    JoinSettings,
    SimulationSettings,
    default_config,
    load_config,
)


def test_packaged_defaults():
    config = default_config()
    assert set(config) >= {"join", "batching", "dataset", "tuning", "simulation", "runtime",
                           "logging"}
    assert BatchSettings.from_config(config) == BatchSettings()
    assert SimulationSettings.from_config(config) == SimulationSettings()
    assert JoinSettings.from_config(config).k == 6


def test_user_file_overrides_only_its_keys(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("join:\n  epsilon: 0.2\nsimulation:\n  mode: Ring\n")
    config = load_config(path)
    join = JoinSettings.from_config(config)
    assert join.epsilon == 0.2
    assert join.k == 6
    assert SimulationSettings.from_config(config).mode == "ring"
    assert config["batching"]["min_batches"] == 3


def test_missing_file_falls_back(tmp_path):
    assert load_config(tmp_path / "absent.yaml") == default_config()


def test_non_mapping_rejected(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("- a\n- b\n")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("section,key,value", [
    ("batching", "batch_size", 0),
    ("batching", "sample_fraction", 1.5),
    ("batching", "overflow_factor", 0.5),
])
def test_invalid_batching(section, key, value):
    with pytest.raises(ConfigError):
        BatchSettings.from_config({section: {key: value}})


@pytest.mark.parametrize("section", [{"mode": "mesh"}, {"beta": 0}])
def test_invalid_simulation(section):
    with pytest.raises(ConfigError):
        SimulationSettings.from_config({"simulation": section})
