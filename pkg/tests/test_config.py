"""
Tests for the YAML run configuration.
"""

from pathlib import Path

import pytest
import yaml

from tunable_graphgen.config import RUN_CONFIG_NAME, RunConfig, dump_run_config, load_run_config
from tunable_graphgen.errors import ConfigError

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def write_yaml(temp_dir, data, name="run.yaml"):
    path = Path(temp_dir) / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_defaults():
    """Defaults follow the reference experiment."""
    config = load_run_config()
    assert config.feature_order == ["aspl"]
    assert config.train.batch_size == 37
    assert config.train.generator_epochs_per_phase == 500
    assert config.train.estimator_epochs_per_phase == 10000
    assert config.train.alternate_iterations == 2
    assert config.model.latent_dim == 10
    assert config.generation.conditions == [3.0, 4.0, 5.0]
    assert config.generation.count == 300


def test_shipped_configs_load():
    for path in sorted(CONFIG_DIR.glob("*.yaml")):
        assert isinstance(load_run_config(path), RunConfig)


def test_seed_is_shared_with_training(temp_dir):
    """The run seed seeds training unless training sets its own."""
    assert load_run_config(write_yaml(temp_dir, {"seed": 11})).train.seed == 11
    config = load_run_config(write_yaml(temp_dir, {"seed": 11, "train": {"seed": 2}}))
    assert config.train.seed == 2


def test_dump_round_trip(temp_dir):
    config = load_run_config(write_yaml(temp_dir, {
        "feature_order": ["aspl", "clustering"],
        "generation": {"conditions": [{"aspl": 3.0, "clustering": 0.2}], "count": 5},
    }))
    path = dump_run_config(config, Path(temp_dir) / "out")
    assert path.name == RUN_CONFIG_NAME
    assert load_run_config(path).model_dump() == config.model_dump()
    assert list(yaml.safe_load(path.read_text()))[:2] == ["feature_order", "seed"]


@pytest.mark.parametrize("data", [
    {"unknown_section": {}},
    {"train": {"batch_size": 0}},
    {"train": {"typo": 1}},
    {"feature_order": ["diameter"]},
    {"feature_order": ["aspl", "aspl"]},
    {"dataset": {"size_min": 10, "size_max": 5}},
    {"generation": {"temperature": 0.0}},
])
def test_invalid_configs(temp_dir, data):
    with pytest.raises(ConfigError):
        load_run_config(write_yaml(temp_dir, data))


def test_unreadable_files(temp_dir):
    with pytest.raises(ConfigError):
        load_run_config(Path(temp_dir) / "missing.yaml")
    bad = Path(temp_dir) / "bad.yaml"
    bad.write_text("train: [unclosed\n")
    with pytest.raises(ConfigError):
        load_run_config(bad)
    listing = Path(temp_dir) / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_run_config(listing)
