"""
Conditioned generation and the evaluation of generated graph features.

Generation uses the decoder only. Evaluation scores graphs with the
graph-core metrics (disconnected graphs on their largest component) and
summarizes each feature by mean, standard deviation, MAE to the target and a
Gaussian KDE on an even grid.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from sklearn.neighbors import KernelDensity

from .dataset import FeatureScaler, write_edge_list
from .dfs_code import decode, from_tokens
from .errors import ConfigError, EmptyEvaluationError, InvalidCodeError, UndefinedMetricError
from .graph import FeatureVector, Graph, compute_features
from .model import (
    ConditionalGraphVAE,
    Sampler,
    argmax_sampler,
    categorical_sampler,
    decoder_generate,
)
from .utils import PathLike, save_json

logger = logging.getLogger(__name__)

KDE_POINTS = 256
KDE_MIN_BANDWIDTH = 1e-3
DEFAULT_RETRY_FACTOR = 20

Target = Union[float, Mapping[str, float]]

REPORT_METADATA = {
    "kde_bandwidth_rule": "scott: std(ddof=1) * n^(-1/5), floor 1e-3",
    "kde_grid": f"{KDE_POINTS} points over [min - 3h, max + 3h]",
    "disconnected_policy": "scored on the largest connected component",
    "invalid_policy": "invalid sequences are discarded and counted in validity_rate",
}


@dataclass(frozen=True)
class KdeGrid:
    x: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        """Trapezoid-rule integral of the density over the grid."""
        return float(np.sum((self.density[1:] + self.density[:-1]) * np.diff(self.x)) / 2.0)


def scott_bandwidth(values: Sequence[float]) -> float:
    """h = std(ddof=1) * n^(-1/5), floored at 1e-3 (single values get the floor)."""
    data = np.asarray(values, dtype=float)
    sigma = float(data.std(ddof=1)) if data.size > 1 else 0.0
    return max(sigma * data.size ** (-0.2), KDE_MIN_BANDWIDTH)


def kde_density(values: Sequence[float], x: Sequence[float], bandwidth: float) -> np.ndarray:
    """Gaussian kernel density of `values` evaluated at points `x`."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    estimator = KernelDensity(kernel="gaussian", bandwidth=bandwidth)
    estimator.fit(np.asarray(values, dtype=float).reshape(-1, 1))
    return np.exp(estimator.score_samples(np.asarray(x, dtype=float).reshape(-1, 1)))


def kde(values: Sequence[float], points: int = KDE_POINTS,
        bandwidth: Optional[float] = None) -> KdeGrid:
    """
    Gaussian KDE on an even grid spanning [min - 3h, max + 3h].

    Args:
        values: At least one observation
        points: Grid size
        bandwidth: Kernel bandwidth; Scott's rule when omitted

    Raises:
        ValueError: If no values are given or the bandwidth is not positive
    """
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise ValueError("kde needs at least one value")
    h = scott_bandwidth(data) if bandwidth is None else float(bandwidth)
    x = np.linspace(data.min() - 3 * h, data.max() + 3 * h, points)
    return KdeGrid(x, kde_density(data, x, h), h)


@dataclass(frozen=True)
class FeatureStats:
    mean: float
    std: float
    mae: Optional[float] = None


@dataclass
class EvaluationSummary:
    """Per-graph features and their per-feature statistics."""
    feature_order: Tuple[str, ...]
    features: List[FeatureVector]
    stats: Dict[str, FeatureStats]
    targets: Dict[str, float]
    skipped: int = 0
    disconnected: int = 0


def _targets(target: Optional[Target], feature_order: Sequence[str]) -> Dict[str, float]:
    if target is None:
        return {}
    if isinstance(target, Mapping):
        unknown = set(target) - set(feature_order)
        if unknown:
            raise ConfigError(f"targets for unknown features {sorted(unknown)}")
        return {name: float(target[name]) for name in feature_order if name in target}
    # a bare number targets the first (conditioned) feature
    return {feature_order[0]: float(target)}


def evaluate(graphs: Sequence[Graph], feature_order: Sequence[str],
             target: Optional[Target] = None) -> EvaluationSummary:
    """
    Score graphs and summarize every feature.

    MAE is the mean absolute difference to the target in raw units, for
    each feature that has a target. Graphs failing a metric precondition
    are skipped and counted.

    Raises:
        EmptyEvaluationError: If no graph is given or none can be scored
    """
    feature_order = tuple(feature_order)
    if not graphs:
        raise EmptyEvaluationError("no graphs to evaluate")
    targets = _targets(target, feature_order)
    features: List[FeatureVector] = []
    skipped = disconnected = 0
    for graph in graphs:
        try:
            features.append(compute_features(graph, feature_order))
        except UndefinedMetricError as e:
            logger.debug("skipping graph: %s", e)
            skipped += 1
            continue
        if not graph.is_connected():
            disconnected += 1
    if not features:
        raise EmptyEvaluationError(f"none of {len(graphs)} graphs satisfies the metric preconditions")
    if skipped:
        logger.warning("skipped %d of %d graphs failing metric preconditions", skipped, len(graphs))

    values = np.stack([f.to_array() for f in features])
    stats = {}
    for column, name in enumerate(feature_order):
        mae = float(np.mean(np.abs(values[:, column] - targets[name]))) if name in targets else None
        stats[name] = FeatureStats(
            float(values[:, column].mean()), float(values[:, column].std()), mae
        )
    return EvaluationSummary(feature_order, features, stats, targets, skipped, disconnected)


@dataclass
class GenerationReport:
    """Outcome of generating graphs for one condition."""
    condition: Dict[str, float]
    requested: int
    produced: int
    sampled: int
    feature_order: Tuple[str, ...]
    summary: Optional[EvaluationSummary] = None
    kde: Dict[str, KdeGrid] = field(default_factory=dict)
    warning: Optional[str] = None
    metadata: Dict[str, str] = field(default_factory=lambda: dict(REPORT_METADATA))

    @property
    def condition_value(self) -> float:
        return self.condition[self.feature_order[0]]

    @property
    def validity_rate(self) -> float:
        return self.produced / self.sampled if self.sampled else 0.0

    @property
    def features(self) -> List[FeatureVector]:
        return self.summary.features if self.summary else []

    def to_dict(self) -> Dict:
        stats = self.summary.stats if self.summary else {}
        return {
            "condition": self.condition,
            "requested": self.requested,
            "produced": self.produced,
            "sampled": self.sampled,
            "validity_rate": self.validity_rate,
            "disconnected": self.summary.disconnected if self.summary else 0,
            "stats": {
                name: {"mean": s.mean, "std": s.std, "mae": s.mae} for name, s in stats.items()
            },
            "warning": self.warning,
            "metadata": self.metadata,
        }


def _condition(value: Target, feature_order: Sequence[str]) -> Dict[str, float]:
    if isinstance(value, Mapping):
        missing = [name for name in feature_order if name not in value]
        if missing:
            raise ConfigError(f"condition is missing features {missing}")
        return {name: float(value[name]) for name in feature_order}
    if len(feature_order) != 1:
        raise ConfigError(
            f"a single condition value needs one conditioned feature, model has {len(feature_order)}"
        )
    return {feature_order[0]: float(value)}


def generate(model: ConditionalGraphVAE, scaler: FeatureScaler, condition_value: Target,
             count: int, seed: int, temperature: float = 1.0, argmax: bool = False,
             retry_factor: int = DEFAULT_RETRY_FACTOR,
             batch_size: int = 64) -> Tuple[List[Graph], GenerationReport]:
    """
    Generate graphs for a condition value with the decoder alone.

    Latents are drawn from a standard normal with a seeded generator, the
    condition is standardized like the training features, and sequences
    that are not valid DFS codes are discarded. Sampling stops after
    `count` valid graphs or retry_factor * count sequences.

    Args:
        model: Trained model
        scaler: Feature scaler used during training
        condition_value: Raw-unit value, or a mapping for multi-feature conditions
        count: Number of graphs requested
        seed: Seed for latents and token sampling
        temperature: Softmax temperature of the categorical sampler
        argmax: Take the most likely token instead of sampling
        retry_factor: Sequence budget per requested graph
        batch_size: Sequences decoded together

    Returns:
        Generated graphs and the report (with a warning if fewer than
        `count` graphs were produced)
    """
    if count < 1:
        raise ConfigError(f"count must be at least 1, got {count}")
    feature_order = scaler.names
    condition = _condition(condition_value, feature_order)
    dtype = next(model.parameters()).dtype
    standardized = scaler.transform([condition[name] for name in feature_order])
    condition_row = torch.tensor(standardized, dtype=dtype).unsqueeze(0)

    generator = torch.Generator()
    generator.manual_seed(seed)
    sampler: Sampler = argmax_sampler() if argmax else categorical_sampler(generator, temperature)
    budget = retry_factor * count
    graphs: List[Graph] = []
    sampled = 0
    model.eval()
    while len(graphs) < count and sampled < budget:
        size = min(batch_size, budget - sampled)
        latent = torch.randn(size, model.config.latent_dim, generator=generator, dtype=dtype)
        sequences = decoder_generate(model, latent, condition_row.expand(size, -1), sampler)
        for sequence in sequences:
            if len(graphs) >= count:
                break
            sampled += 1
            try:
                graphs.append(decode(from_tokens(sequence)))
            except InvalidCodeError as e:
                logger.debug("rejected sequence: %s", e)

    report = GenerationReport(condition, count, len(graphs), sampled, feature_order)
    if len(graphs) < count:
        report.warning = (
            f"produced {len(graphs)} of {count} graphs within {budget} sampled sequences"
        )
        logger.warning("condition %s: %s", condition, report.warning)
    if graphs:
        report.summary = evaluate(graphs, feature_order, condition)
        report.kde = {
            name: kde([f[name] for f in report.summary.features]) for name in feature_order
        }
    logger.info(
        "condition %s: %d graphs, validity rate %.3f", condition, len(graphs), report.validity_rate
    )
    return graphs, report


def features_frame(summary: EvaluationSummary) -> pd.DataFrame:
    """
    One row per scored graph, in scoring order.

    Args:
        summary: Evaluation summary

    Returns:
        DataFrame with a `graph` index column and one column per feature
    """
    rows = [dict(graph=i, **f.as_dict()) for i, f in enumerate(summary.features)]
    return pd.DataFrame(rows, columns=["graph", *summary.feature_order])


def kde_frame(grids: Mapping[str, KdeGrid]) -> pd.DataFrame:
    """
    Long-format density grids for CSV output.

    Args:
        grids: KDE grid per feature name

    Returns:
        DataFrame with columns feature, x, density; header-only when empty
    """
    frames = [
        pd.DataFrame({"feature": name, "x": grid.x, "density": grid.density})
        for name, grid in grids.items()
    ]
    if not frames:
        return pd.DataFrame(columns=["feature", "x", "density"])
    return pd.concat(frames, ignore_index=True)


def summary_dict(summary: EvaluationSummary) -> Dict:
    """JSON-ready statistics of a summary."""
    return {
        "count": len(summary.features),
        "skipped": summary.skipped,
        "disconnected": summary.disconnected,
        "targets": summary.targets,
        "stats": {
            name: {"mean": s.mean, "std": s.std, "mae": s.mae} for name, s in summary.stats.items()
        },
        "metadata": {k: REPORT_METADATA[k] for k in ("kde_bandwidth_rule", "kde_grid",
                                                      "disconnected_policy")},
    }


def write_evaluation(summary: EvaluationSummary, grids: Mapping[str, KdeGrid],
                     directory: PathLike) -> Path:
    """Write features.csv, kde.csv and summary.json for an evaluated graph set."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    features_frame(summary).to_csv(directory / "features.csv", index=False)
    kde_frame(grids).to_csv(directory / "kde.csv", index=False)
    save_json(summary_dict(summary), directory / "summary.json")
    return directory


def write_report(report: GenerationReport, graphs: Sequence[Graph], directory: PathLike) -> Path:
    """Write generated graphs as edge lists plus the report CSVs and summary."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for index, graph in enumerate(graphs):
        write_edge_list(graph, directory / f"graph-{index:04d}.edges")
    if report.summary is not None:
        features_frame(report.summary).to_csv(directory / "features.csv", index=False)
    else:
        pd.DataFrame(columns=["graph", *report.feature_order]).to_csv(
            directory / "features.csv", index=False
        )
    kde_frame(report.kde).to_csv(directory / "kde.csv", index=False)
    save_json(report.to_dict(), directory / "summary.json")
    logger.info("wrote report for %s to %s", report.condition, directory)
    return directory


def comparison_frame(rows: Sequence[Tuple[str, EvaluationSummary]]) -> pd.DataFrame:
    """One row per (label, feature with a target): target, count, mean, std, mae."""
    records = []
    for label, summary in rows:
        for name, target in summary.targets.items():
            stats = summary.stats[name]
            records.append({
                "label": label,
                "feature": name,
                "target": target,
                "count": len(summary.features),
                "mean": stats.mean,
                "std": stats.std,
                "mae": stats.mae,
            })
    return pd.DataFrame(
        records, columns=["label", "feature", "target", "count", "mean", "std", "mae"]
    )


def plot_kde(kde_csvs: Mapping[str, PathLike], out_path: PathLike,
             feature: Optional[str] = None) -> Path:
    """
    Render kde.csv files into one figure, one curve per label.

    Requires matplotlib (the `plot` extra).
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, path in kde_csvs.items():
        frame = pd.read_csv(path)
        name = feature or (frame["feature"].iloc[0] if len(frame) else None)
        frame = frame[frame["feature"] == name]
        ax.plot(frame["x"], frame["density"], label=label)
        ax.set_xlabel(str(name))
    ax.set_ylabel("density")
    ax.legend()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path
