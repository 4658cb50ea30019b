"""
Graph representation and the graph features used as condition values.

Metrics are computed with networkx on an undirected simple graph; the
conventions fixed here (largest component for path lengths, average local
clustering, continuous power-law MLE with d_min = 1) are shared by the
dataset, the training targets and the evaluation reports.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import UndefinedMetricError

Edge = Tuple[int, int]

ASPL = "aspl"
CLUSTERING = "clustering"
POWERLAW_EXPONENT = "powerlaw_exponent"


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes 0..node_count-1."""
    node_count: int
    edges: FrozenSet[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.node_count < 0:
            raise ValueError(f"node_count must be non-negative, got {self.node_count}")
        canonical = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(
                    f"edge ({u}, {v}) out of range for {self.node_count} nodes"
                )
            canonical.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(canonical))

    @classmethod
    def from_edges(cls, edges: Iterable[Edge], node_count: Optional[int] = None) -> "Graph":
        """Build a graph from edge pairs; node_count defaults to max id + 1."""
        edges = [(int(u), int(v)) for u, v in edges]
        if node_count is None:
            node_count = max((max(u, v) for u, v in edges), default=-1) + 1
        return cls(node_count, frozenset(edges))

    @classmethod
    def from_networkx(cls, nx_graph: nx.Graph) -> "Graph":
        """Convert a networkx graph, relabeling nodes in sorted order."""
        order = {node: i for i, node in enumerate(sorted(nx_graph.nodes()))}
        return cls(
            len(order),
            frozenset((order[u], order[v]) for u, v in nx_graph.edges() if u != v),
        )

    def to_networkx(self) -> nx.Graph:
        nx_graph = nx.Graph()
        nx_graph.add_nodes_from(range(self.node_count))
        nx_graph.add_edges_from(self.sorted_edges())
        return nx_graph

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> List[Edge]:
        return sorted(self.edges)

    def adjacency(self) -> List[List[int]]:
        """Sorted neighbor lists indexed by node id."""
        neighbors: List[List[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.sorted_edges():
            neighbors[u].append(v)
            neighbors[v].append(u)
        for row in neighbors:
            row.sort()
        return neighbors

    def degrees(self) -> List[int]:
        return [len(row) for row in self.adjacency()]

    def components(self) -> List[List[int]]:
        """Connected components as sorted node lists."""
        return [sorted(c) for c in nx.connected_components(self.to_networkx())]

    def is_connected(self) -> bool:
        return self.node_count > 0 and len(self.components()) == 1

    def induced_subgraph(self, nodes: Sequence[int]) -> "Graph":
        """Induced subgraph relabeled to 0..k-1 in the given node order."""
        index = {node: i for i, node in enumerate(nodes)}
        return Graph(
            len(index),
            frozenset(
                (index[u], index[v]) for u, v in self.edges if u in index and v in index
            ),
        )

    def largest_component(self) -> "Graph":
        """
        Largest connected component, relabeled in ascending node order.

        Ties between equally large components go to the one holding the
        smallest node id.
        """
        if self.node_count == 0:
            return self
        best = max(self.components(), key=lambda c: (len(c), -c[0]))
        return self.induced_subgraph(best)

    def relabel(self, permutation: Sequence[int]) -> "Graph":
        """Apply node mapping i -> permutation[i]."""
        return Graph(
            self.node_count,
            frozenset((permutation[u], permutation[v]) for u, v in self.edges),
        )

    def fingerprint(self) -> Tuple:
        """
        Relabeling-invariant summary used to compare graphs up to isomorphism.

        Equal graphs up to relabeling always have equal fingerprints; the
        converse holds for the small graphs this package handles in practice
        but is not guaranteed.

        Returns:
            (node_count, edge_count, sorted degrees, triangle count,
            sorted eccentricities within each component)
        """
        nx_graph = self.to_networkx()
        eccentricities: List[int] = []
        for component in nx.connected_components(nx_graph):
            eccentricities.extend(nx.eccentricity(nx_graph.subgraph(component)).values())
        return (
            self.node_count,
            self.edge_count,
            tuple(sorted(self.degrees())),
            sum(nx.triangles(nx_graph).values()) // 3,
            tuple(sorted(eccentricities)),
        )


@dataclass(frozen=True)
class FeatureVector:
    """Ordered named feature values."""
    names: Tuple[str, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        names = tuple(self.names)
        values = tuple(float(v) for v in self.values)
        if len(names) != len(values):
            raise ValueError(f"{len(names)} names but {len(values)} values")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate feature names in {names}")
        unknown = [n for n in names if n not in FEATURE_FUNCTIONS]
        if unknown:
            raise ValueError(
                f"unknown features {unknown}; expected names from {list(FEATURE_FUNCTIONS)}"
            )
        for name, value in zip(names, values):
            if not math.isfinite(value):
                raise ValueError(f"feature {name} is not finite: {value}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(cls, values: Mapping[str, float], order: Sequence[str]) -> "FeatureVector":
        return cls(tuple(order), tuple(values[name] for name in order))

    def __getitem__(self, name: str) -> float:
        return self.values[self.names.index(name)]

    def __len__(self) -> int:
        return len(self.names)

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.names, self.values))

    def to_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def average_shortest_path_length(g: Graph) -> float:
    """
    Mean hop distance over unordered node pairs of the largest component.

    Args:
        g: Graph with at least two nodes in its largest component

    Returns:
        Average shortest path length

    Raises:
        UndefinedMetricError: If the largest component has fewer than 2 nodes
    """
    component = g.largest_component()
    if component.node_count < 2:
        raise UndefinedMetricError(
            f"needs at least 2 nodes in the largest component, got {component.node_count}",
            feature=ASPL,
        )
    return float(nx.average_shortest_path_length(component.to_networkx()))


def clustering_coefficient(g: Graph) -> float:
    """
    Average local clustering coefficient; nodes of degree < 2 contribute 0.

    Raises:
        UndefinedMetricError: If the graph has no nodes
    """
    if g.node_count < 1:
        raise UndefinedMetricError("needs at least 1 node", feature=CLUSTERING)
    return float(nx.average_clustering(g.to_networkx()))


def powerlaw_exponent_from_degrees(degrees: Sequence[float], d_min: float = 1.0) -> float:
    """
    Continuous maximum-likelihood power-law exponent.

    alpha = 1 + n / sum(ln(d_i / d_min))

    Args:
        degrees: Node degrees, each >= d_min
        d_min: Lower cutoff of the power law

    Raises:
        UndefinedMetricError: If fewer than 2 degrees are given, any degree is
            below d_min, or every degree equals d_min
    """
    d = np.asarray(degrees, dtype=float)
    if d.size < 2:
        raise UndefinedMetricError(
            f"needs at least 2 nodes, got {d.size}", feature=POWERLAW_EXPONENT
        )
    if np.any(d < d_min):
        raise UndefinedMetricError(
            f"all degrees must be >= {d_min}", feature=POWERLAW_EXPONENT
        )
    denominator = float(np.sum(np.log(d / d_min)))
    if denominator <= 0.0:
        raise UndefinedMetricError(
            "all degrees equal d_min, estimator denominator is zero",
            feature=POWERLAW_EXPONENT,
        )
    return 1.0 + d.size / denominator


def powerlaw_exponent(g: Graph) -> float:
    """Power-law exponent of the degree distribution (d_min fixed at 1)."""
    return powerlaw_exponent_from_degrees(g.degrees())


FEATURE_FUNCTIONS: Dict[str, Callable[[Graph], float]] = {
    ASPL: average_shortest_path_length,
    CLUSTERING: clustering_coefficient,
    POWERLAW_EXPONENT: powerlaw_exponent,
}


def compute_features(g: Graph, names: Sequence[str]) -> FeatureVector:
    """
    Evaluate the named metrics on a graph, in order.

    Raises:
        UndefinedMetricError: Tagged with the failing feature name
        ValueError: If a name is not a known feature
    """
    values = []
    for name in names:
        if name not in FEATURE_FUNCTIONS:
            raise ValueError(
                f"unknown feature {name}; expected one of {list(FEATURE_FUNCTIONS)}"
            )
        try:
            values.append(FEATURE_FUNCTIONS[name](g))
        except UndefinedMetricError as e:
            if e.feature is None:
                raise UndefinedMetricError(str(e), feature=name) from e
            raise
    return FeatureVector(tuple(names), tuple(values))
