"""
Utility functions for the tunable-graphgen package.
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Union

PathLike = Union[str, os.PathLike]

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def validate_range(value: Union[int, float], min_value: Union[int, float],
                   max_value: Union[int, float], param_name: str) -> Union[int, float]:
    """
    Validate that a value is finite and within a specified range.

    Args:
        value: Value to validate
        min_value: Minimum acceptable value
        max_value: Maximum acceptable value
        param_name: Name of the parameter for error message

    Returns:
        The validated value

    Raises:
        ValueError: If the value is not within the specified range
    """
    if not math.isfinite(value) or value < min_value or value > max_value:
        raise ValueError(
            f"{param_name} must be between {min_value} and {max_value}, got {value}"
        )
    return value


def configure_logging(level: Union[int, str] = logging.INFO) -> None:
    """
    Install the package stream handler on the root logger, replacing a
    previously installed one.

    Only the command-line entry point calls this; library modules just
    create their loggers.

    Args:
        level: Logging level name or number
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "tunable_graphgen", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.tunable_graphgen = True
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def save_json(data: Dict[str, Any], file_path: PathLike) -> Path:
    """
    Save a dictionary to a JSON file, creating parent directories.

    Keys keep their insertion order so repeated runs write identical bytes.

    Args:
        data: Dictionary to save
        file_path: Destination path

    Returns:
        Path to the saved file
    """
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return path


def load_json(file_path: PathLike) -> Dict[str, Any]:
    """
    Load a dictionary from a JSON file.

    Args:
        file_path: Path to the file to load from

    Returns:
        Loaded dictionary

    Raises:
        FileNotFoundError: If the file doesn't exist
        json.JSONDecodeError: If the file isn't valid JSON
    """
    with open(file_path, "r") as f:
        return json.load(f)


def list_graph_files(directory: PathLike, pattern: str = "*.edges") -> List[Path]:
    """
    List the edge-list files in a directory in name order.

    Args:
        directory: Directory to search
        pattern: Glob pattern of graph files

    Returns:
        Sorted list of matching files

    Raises:
        FileNotFoundError: If the directory doesn't exist
    """
    path = Path(directory)
    if not path.is_dir():
        raise FileNotFoundError(f"graph directory not found: {path}")
    return sorted(p for p in path.glob(pattern) if p.is_file())


def format_condition(value: Union[float, Mapping[str, float]]) -> str:
    """
    Directory-safe label for a condition.

    3.0 -> "condition-3.0"; {"aspl": 3.0, "clustering": 0.2} ->
    "condition-aspl-3.0_clustering-0.2".
    """
    if isinstance(value, Mapping):
        return "condition-" + "_".join(f"{name}-{float(v)}" for name, v in value.items())
    return f"condition-{float(value)}"
