"""
Dataset construction: edge-list ingestion, induced-subgraph sampling,
synthetic corpora, feature standardisation and the training manifest.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .dfs_code import DfsCode, decode, encode, to_tokens
from .errors import (
    EmptyDatasetError,
    IngestError,
    NotEncodableError,
    SamplingExhaustedError,
    UndefinedMetricError,
)
from .graph import FeatureVector, Graph, average_shortest_path_length, compute_features
from .utils import PathLike, load_json, save_json, validate_range

logger = logging.getLogger(__name__)

DEFAULT_HEADROOM = 0.1
SYNTHETIC_KINDS = ("path", "cycle", "watts_strogatz", "erdos_renyi")


@dataclass(frozen=True)
class IngestStats:
    """Counts reported while reading an edge list."""
    lines: int
    edges: int
    self_loops: int
    duplicates: int


def ingest_edge_list(path: PathLike) -> Tuple[Graph, IngestStats]:
    """
    Read a whitespace-separated edge list as an undirected simple graph.

    Lines starting with '#' and blank lines are ignored; columns after the
    first two are ignored. Node ids are compacted to 0..n-1 in order of
    first appearance. Self-loops and duplicate or reverse edges are dropped.

    Args:
        path: Edge-list file

    Returns:
        Graph and ingest statistics

    Raises:
        FileNotFoundError: If the file doesn't exist
        IngestError: On the first unparsable line
    """
    ids: Dict[int, int] = {}
    edges = set()
    lines = self_loops = duplicates = 0
    with open(path, "r") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            lines += 1
            fields = line.split()
            if len(fields) < 2:
                raise IngestError(f"expected 'u v', got {line!r}", path, line_number)
            try:
                u, v = int(fields[0]), int(fields[1])
            except ValueError:
                raise IngestError(f"non-integer node id in {line!r}", path, line_number)
            if u == v:
                self_loops += 1
                continue
            a = ids.setdefault(u, len(ids))
            b = ids.setdefault(v, len(ids))
            pair = (min(a, b), max(a, b))
            if pair in edges:
                duplicates += 1
                continue
            edges.add(pair)
    stats = IngestStats(lines=lines, edges=len(edges), self_loops=self_loops, duplicates=duplicates)
    return Graph(len(ids), frozenset(edges)), stats


def load_edge_list(path: PathLike) -> Graph:
    """Read an edge list and log what was dropped (see ingest_edge_list)."""
    graph, stats = ingest_edge_list(path)
    if stats.self_loops or stats.duplicates:
        logger.warning(
            "%s: dropped %d self-loops and %d duplicate edges",
            path, stats.self_loops, stats.duplicates,
        )
    logger.info("%s: %d nodes, %d edges", path, graph.node_count, graph.edge_count)
    return graph


def write_edge_list(graph: Graph, path: PathLike) -> Path:
    """Write a graph as an edge list with a '#' header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# nodes {graph.node_count} edges {graph.edge_count}"]
    lines.extend(f"{u} {v}" for u, v in graph.sorted_edges())
    path.write_text("\n".join(lines) + "\n")
    return path


def _random_walk(adjacency: List[List[int]], start: int, target: int,
                 rng: np.random.Generator, max_steps: int) -> Optional[List[int]]:
    collected = {start}
    current = start
    for _ in range(max_steps):
        if len(collected) >= target:
            break
        neighbors = adjacency[current]
        if not neighbors:
            return None
        current = neighbors[int(rng.integers(len(neighbors)))]
        collected.add(current)
    if len(collected) != target:
        return None
    return sorted(collected)


def _induce(adjacency: List[List[int]], nodes: List[int]) -> Graph:
    index = {node: i for i, node in enumerate(nodes)}
    edges = frozenset(
        (index[u], index[v]) for u in nodes for v in adjacency[u] if v in index and u < v
    )
    return Graph(len(nodes), edges)


def sample_induced_subgraphs(g: Graph, count: int, size_min: int, size_max: int,
                             seed: int, max_retries: int = 100,
                             walk_factor: int = 100) -> List[Graph]:
    """
    Sample connected induced subgraphs by random-walk node collection.

    Each sample draws a target size uniformly from [size_min, size_max] and a
    uniformly random start node, walks until the target number of distinct
    nodes is collected, then induces every edge among them. Failed walks
    are retried.

    Args:
        g: Source graph
        count: Number of subgraphs
        size_min: Minimum node count
        size_max: Maximum node count
        seed: Seed of the sampling generator
        max_retries: Attempts allowed per subgraph
        walk_factor: Walk steps allowed per target node

    Returns:
        List of `count` connected subgraphs

    Raises:
        ValueError: If the size bounds or count are invalid
        SamplingExhaustedError: If no component is large enough or a
            subgraph could not be sampled within max_retries
    """
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if size_min < 2 or size_max < size_min:
        raise ValueError(f"invalid size bounds [{size_min}, {size_max}]")
    if count == 0:
        return []
    largest = max((len(c) for c in nx.connected_components(g.to_networkx())), default=0)
    if largest < size_min:
        raise SamplingExhaustedError(
            f"largest component has {largest} nodes, fewer than size_min={size_min}"
        )

    adjacency = g.adjacency()
    rng = np.random.default_rng(seed)
    samples: List[Graph] = []
    for index in range(count):
        for _ in range(max_retries):
            target = int(rng.integers(size_min, size_max + 1))
            start = int(rng.integers(g.node_count))
            nodes = _random_walk(adjacency, start, target, rng, walk_factor * target)
            if nodes is None:
                continue
            subgraph = _induce(adjacency, nodes)
            if subgraph.is_connected():
                samples.append(subgraph)
                break
        else:
            raise SamplingExhaustedError(
                f"subgraph {index} not sampled within {max_retries} attempts"
            )
    logger.info("sampled %d induced subgraphs of %d-%d nodes", count, size_min, size_max)
    return samples


def synthetic_graphs(count: int, size_min: int = 8, size_max: int = 16, seed: int = 0,
                     aspl_bounds: Tuple[float, float] = (1.2, 4.5),
                     max_retries: int = 1000) -> List[Graph]:
    """
    Deterministic mixture of paths, cycles, Watts-Strogatz and Erdos-Renyi graphs.

    Only connected graphs whose average shortest path length lies within
    aspl_bounds are kept.

    Raises:
        SamplingExhaustedError: If a graph could not be drawn within max_retries
    """
    if size_min < 2 or size_max < size_min:
        raise ValueError(f"invalid size bounds [{size_min}, {size_max}]")
    rng = np.random.default_rng(seed)
    low, high = aspl_bounds
    graphs: List[Graph] = []
    for index in range(count):
        for _ in range(max_retries):
            kind = SYNTHETIC_KINDS[int(rng.integers(len(SYNTHETIC_KINDS)))]
            n = int(rng.integers(size_min, size_max + 1))
            sub_seed = int(rng.integers(2**31 - 1))
            if kind == "path":
                nx_graph = nx.path_graph(n)
            elif kind == "cycle":
                nx_graph = nx.cycle_graph(n)
            elif kind == "watts_strogatz":
                k = int(rng.choice([2, 4]))
                p = float(rng.uniform(0.05, 0.5))
                try:
                    nx_graph = nx.connected_watts_strogatz_graph(n, k, p, tries=100, seed=sub_seed)
                except nx.NetworkXError:
                    continue
            else:
                p = float(rng.uniform(0.15, 0.7))
                nx_graph = nx.gnp_random_graph(n, p, seed=sub_seed)
                nx_graph = nx_graph.subgraph(max(nx.connected_components(nx_graph), key=len))
            graph = Graph.from_networkx(nx_graph)
            if graph.node_count < size_min or not graph.is_connected():
                continue
            if low <= average_shortest_path_length(graph) <= high:
                graphs.append(graph)
                break
        else:
            raise SamplingExhaustedError(
                f"synthetic graph {index} not drawn within {max_retries} attempts"
            )
    logger.info("generated %d synthetic graphs of %d-%d nodes", count, size_min, size_max)
    return graphs


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature z-scoring fitted on the training features."""
    names: Tuple[str, ...]
    mean: Tuple[float, ...]
    std: Tuple[float, ...]

    @classmethod
    def fit(cls, features: Sequence[FeatureVector]) -> "FeatureScaler":
        """
        Fit population mean and standard deviation per feature.

        Constant features keep unit scale so transform stays finite.

        Args:
            features: Training feature vectors sharing one name order

        Returns:
            Fitted scaler

        Raises:
            EmptyDatasetError: If features is empty
        """
        if not features:
            raise EmptyDatasetError("cannot fit a scaler without features")
        names = features[0].names
        values = np.stack([f.to_array() for f in features])
        std = values.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(names, tuple(values.mean(axis=0).tolist()), tuple(std.tolist()))

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Standardise raw feature values, last axis in `names` order."""
        return (np.asarray(values, dtype=float) - np.asarray(self.mean)) / np.asarray(self.std)

    def to_dict(self) -> Dict[str, List]:
        return {"names": list(self.names), "mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, data: Dict[str, List]) -> "FeatureScaler":
        return cls(tuple(data["names"]), tuple(data["mean"]), tuple(data["std"]))


@dataclass(frozen=True)
class ManifestRecord:
    graph: Graph
    code: DfsCode
    features: FeatureVector


@dataclass(frozen=True)
class SkippedGraph:
    index: int
    reason: str


@dataclass
class DatasetManifest:
    """Encoded training graphs with their features and sequence capacities."""
    records: List[ManifestRecord]
    feature_order: Tuple[str, ...]
    max_nodes: int
    max_sequence_length: int
    skipped: List[SkippedGraph] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def scaler(self) -> FeatureScaler:
        return FeatureScaler.fit([r.features for r in self.records])


def _with_headroom(value: int, headroom: float) -> int:
    # round() guards against 10 * 1.1 == 11.000000000000002
    return int(math.ceil(round(value * (1.0 + headroom), 9)))


def build_manifest(graphs: Sequence[Graph], feature_order: Sequence[str],
                   headroom: float = DEFAULT_HEADROOM) -> DatasetManifest:
    """
    Encode graphs, compute their features and size the token vocabularies.

    Graphs that cannot be encoded or fail a metric precondition are skipped
    and reported. max_nodes and max_sequence_length are the maxima over the
    kept graphs (the latter counting the end step) with headroom added.

    Raises:
        EmptyDatasetError: If no graph is usable
    """
    validate_range(headroom, 0.0, 10.0, "headroom")
    feature_order = tuple(feature_order)
    records: List[ManifestRecord] = []
    skipped: List[SkippedGraph] = []
    for index, graph in enumerate(graphs):
        try:
            code = encode(graph)
            features = compute_features(graph, feature_order)
        except (NotEncodableError, UndefinedMetricError) as e:
            skipped.append(SkippedGraph(index, str(e)))
            continue
        records.append(ManifestRecord(graph, code, features))
    for skip in skipped:
        logger.warning("skipped graph %d: %s", skip.index, skip.reason)
    if not records:
        raise EmptyDatasetError(f"no usable graph among {len(graphs)} inputs")

    max_nodes = _with_headroom(max(r.graph.node_count for r in records), headroom)
    max_sequence_length = _with_headroom(max(len(r.code) for r in records) + 1, headroom)
    for record in records:
        to_tokens(record.code, max_nodes, max_sequence_length=max_sequence_length)
    logger.info(
        "manifest: %d records, %d skipped, max_nodes=%d, max_sequence_length=%d",
        len(records), len(skipped), max_nodes, max_sequence_length,
    )
    return DatasetManifest(records, feature_order, max_nodes, max_sequence_length, skipped)


class ManifestLine(BaseModel):
    """One persisted manifest record."""
    model_config = ConfigDict(extra="forbid")

    node_count: int = Field(..., ge=0, description="Number of nodes")
    edges: List[Tuple[int, int]] = Field(..., description="Sorted canonical edge pairs")
    code: str = Field(..., description="DFS code in debug text form")
    features: Dict[str, float] = Field(..., description="Feature values by name")


class ManifestSummary(BaseModel):
    """Sidecar summary written next to a manifest."""
    model_config = ConfigDict(extra="forbid")

    record_count: int = Field(..., ge=1)
    max_nodes: int = Field(..., ge=2)
    max_sequence_length: int = Field(..., ge=2)
    feature_order: List[str]
    feature_mean: List[float]
    feature_std: List[float]
    skipped: List[Dict[str, Any]] = Field(default_factory=list)


def summary_path(manifest_path: PathLike) -> Path:
    """Sidecar path: data/manifest.jsonl -> data/manifest.summary.json."""
    return Path(manifest_path).with_suffix(".summary.json")


def save_manifest(manifest: DatasetManifest, path: PathLike) -> Path:
    """Write the manifest as JSON lines plus its summary sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for record in manifest.records:
            line = ManifestLine(
                node_count=record.graph.node_count,
                edges=record.graph.sorted_edges(),
                code=record.code.to_text(),
                features=record.features.as_dict(),
            )
            f.write(line.model_dump_json() + "\n")
    scaler = manifest.scaler()
    summary = ManifestSummary(
        record_count=len(manifest),
        max_nodes=manifest.max_nodes,
        max_sequence_length=manifest.max_sequence_length,
        feature_order=list(manifest.feature_order),
        feature_mean=list(scaler.mean),
        feature_std=list(scaler.std),
        skipped=[{"index": s.index, "reason": s.reason} for s in manifest.skipped],
    )
    save_json(summary.model_dump(), summary_path(path))
    logger.info("wrote %d records to %s", len(manifest), path)
    return path


def load_manifest(path: PathLike) -> DatasetManifest:
    """
    Read a manifest and its summary sidecar.

    Each record is cross-checked: its code must decode to a graph with the
    same fingerprint as the stored edge list.

    Raises:
        FileNotFoundError: If the manifest or its summary is missing
        IngestError: On a malformed record or an unreadable summary
        EmptyDatasetError: If the manifest holds no records
    """
    path = Path(path)
    try:
        summary = ManifestSummary.model_validate(load_json(summary_path(path)))
    except json.JSONDecodeError as e:
        raise IngestError(f"summary is not valid JSON: {e}", summary_path(path))
    except ValidationError as e:
        raise IngestError(f"invalid summary: {e}", summary_path(path))
    order = tuple(summary.feature_order)
    records: List[ManifestRecord] = []
    with open(path, "r") as f:
        for line_number, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                line = ManifestLine.model_validate_json(text)
                graph = Graph(line.node_count, frozenset(line.edges))
                code = DfsCode.from_text(line.code)
                features = FeatureVector.from_mapping(line.features, order)
                decoded = decode(code)
            except (ValidationError, ValueError, KeyError) as e:
                raise IngestError(f"invalid record: {e}", path, line_number)
            if decoded.fingerprint() != graph.fingerprint():
                raise IngestError("code does not match its graph", path, line_number)
            records.append(ManifestRecord(graph, code, features))
    if not records:
        raise EmptyDatasetError(f"manifest {path} holds no records")
    skipped = [SkippedGraph(int(s["index"]), str(s["reason"])) for s in summary.skipped]
    return DatasetManifest(records, order, summary.max_nodes, summary.max_sequence_length, skipped)
