"""
Run configuration: one YAML file with a section per pipeline stage.
"""

import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .graph import FEATURE_FUNCTIONS
from .model import ModelConfig
from .training import TrainConfig
from .utils import PathLike

logger = logging.getLogger(__name__)

RUN_CONFIG_NAME = "run_config.yaml"


class DatasetConfig(BaseModel):
    """Where training graphs come from and how the manifest is sized."""
    model_config = ConfigDict(extra="forbid")

    source: Literal["corpus", "synthetic"] = Field(
        "corpus", description="Sample induced subgraphs of a corpus, or draw synthetic graphs"
    )
    corpus: Optional[str] = Field(None, description="Edge-list file of the source network")
    count: int = Field(2000, ge=1, description="Number of training graphs")
    size_min: int = Field(10, ge=2, description="Minimum nodes per graph")
    size_max: int = Field(50, ge=2, description="Maximum nodes per graph")
    max_retries: int = Field(100, ge=1, description="Sampling attempts per graph")
    headroom: float = Field(0.1, ge=0.0, description="Capacity margin over the largest graph")
    aspl_bounds: Tuple[float, float] = Field(
        (1.2, 4.5), description="ASPL range kept by the synthetic corpus"
    )

    @model_validator(mode="after")
    def check_sizes(self):
        if self.size_max < self.size_min:
            raise ValueError(f"size_max ({self.size_max}) is below size_min ({self.size_min})")
        if self.aspl_bounds[1] < self.aspl_bounds[0]:
            raise ValueError(f"empty aspl_bounds {self.aspl_bounds}")
        return self


class GenerationConfig(BaseModel):
    """Conditioned sampling settings."""
    model_config = ConfigDict(extra="forbid")

    conditions: List[Union[float, Dict[str, float]]] = Field(
        [3.0, 4.0, 5.0], min_length=1,
        description="Condition values (or feature -> value mappings), one report each",
    )
    count: int = Field(300, ge=1, description="Graphs per condition")
    temperature: float = Field(1.0, gt=0.0, allow_inf_nan=False)
    argmax: bool = Field(False, description="Greedy decoding instead of sampling")
    retry_factor: int = Field(20, ge=1, description="Sequence budget per requested graph")
    batch_size: int = Field(64, ge=1, description="Sequences decoded together")


class RunConfig(BaseModel):
    """Everything a run needs; echoed into every output directory."""
    model_config = ConfigDict(extra="forbid")

    feature_order: List[str] = Field(["aspl"], min_length=1,
                                     description="Conditioned features in vector order")
    seed: int = Field(0, description="Seed shared by sampling, training and generation")
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    generation: GenerationConfig = Field(default_factory=GenerationConfig)

    @field_validator("feature_order")
    @classmethod
    def check_features(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in FEATURE_FUNCTIONS]
        if unknown:
            raise ValueError(f"unknown features {unknown}; choose from {sorted(FEATURE_FUNCTIONS)}")
        if len(set(value)) != len(value):
            raise ValueError(f"duplicate features in {value}")
        return value

    @model_validator(mode="after")
    def share_seed(self):
        # the run seed also seeds training unless the train section sets its own
        if "seed" not in self.train.model_fields_set:
            self.train.seed = self.seed
        return self


def load_run_config(path: Optional[PathLike] = None) -> RunConfig:
    """
    Read and validate a YAML run configuration; defaults when path is None.

    Raises:
        ConfigError: If the file is missing, not YAML, or fails validation
    """
    if path is None:
        return RunConfig()
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"{path} is not valid YAML: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping of sections")
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}: {e}")
    logger.debug("loaded config %s", path)
    return config


def dump_run_config(config: RunConfig, directory: PathLike) -> Path:
    """Echo the effective configuration to <directory>/run_config.yaml."""
    path = Path(directory) / RUN_CONFIG_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=False)
    return path
