"""
DFS-code serialization of graphs and its token form.

A code lists every edge once as (t_u, t_v, l_u, l_e, l_v), where t_* are
depth-first discovery timestamps. Forward edges (t_u < t_v) introduce the
next timestamp, backward edges (t_u > t_v) close a cycle from the most
recently discovered node. Labels are kept in the tuple but every slot holds
the constant symbol 0 for unlabeled graphs.
"""

from dataclasses import dataclass
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import CapacityError, EmptyCodeError, InvalidCodeError, NotEncodableError
from .graph import Graph

NO_LABEL = 0
SLOT_NAMES = ("t_u", "t_v", "l_u", "l_e", "l_v")

Step = Tuple[int, int, int, int, int]


class DfsEdge(NamedTuple):
    t_u: int
    t_v: int
    l_u: int = NO_LABEL
    l_e: int = NO_LABEL
    l_v: int = NO_LABEL

    @property
    def is_forward(self) -> bool:
        return self.t_u < self.t_v


@dataclass(frozen=True)
class DfsCode:
    """Ordered list of DFS edges."""
    edges: Tuple[DfsEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(DfsEdge(*e) for e in self.edges))

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self) -> Iterator[DfsEdge]:
        return iter(self.edges)

    @property
    def node_count(self) -> int:
        return max((max(e.t_u, e.t_v) for e in self.edges), default=-1) + 1

    def validate(self) -> "DfsCode":
        """
        Check the structural invariants of a DFS code.

        Returns:
            The code itself

        Raises:
            EmptyCodeError: If the code has no edges
            InvalidCodeError: At the first offending position
        """
        if not self.edges:
            raise EmptyCodeError("code has no edges")
        current = -1
        pairs = set()
        for position, edge in enumerate(self.edges):
            if min(edge) < 0:
                raise InvalidCodeError(f"negative symbol in {tuple(edge)}", position)
            if edge.t_u == edge.t_v:
                raise InvalidCodeError(f"self-loop on timestamp {edge.t_u}", position)
            if position == 0:
                if (edge.t_u, edge.t_v) != (0, 1):
                    raise InvalidCodeError(
                        f"first edge must be (0, 1), got ({edge.t_u}, {edge.t_v})", position
                    )
                current = 1
            elif edge.is_forward:
                if edge.t_u > current:
                    raise InvalidCodeError(
                        f"forward edge starts at unseen timestamp {edge.t_u}", position
                    )
                if edge.t_v != current + 1:
                    raise InvalidCodeError(
                        f"forward edge must introduce timestamp {current + 1}, got {edge.t_v}",
                        position,
                    )
                current = edge.t_v
            elif edge.t_u != current:
                raise InvalidCodeError(
                    f"backward edge must start at current position {current}, got {edge.t_u}",
                    position,
                )
            pair = (min(edge.t_u, edge.t_v), max(edge.t_u, edge.t_v))
            if pair in pairs:
                raise InvalidCodeError(f"duplicate edge {pair}", position)
            pairs.add(pair)
        return self

    def to_text(self) -> str:
        """Debug form: one edge per line, 't_u t_v l_u l_e l_v'."""
        return "\n".join(" ".join(str(x) for x in edge) for edge in self.edges)

    @classmethod
    def from_text(cls, text: str) -> "DfsCode":
        edges = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            fields = [int(x) for x in line.split()]
            if len(fields) != len(SLOT_NAMES):
                raise InvalidCodeError(f"expected {len(SLOT_NAMES)} fields, got {line!r}", len(edges))
            edges.append(DfsEdge(*fields))
        return cls(tuple(edges))


def _visit_order(degrees: Sequence[int]):
    return lambda v: (-degrees[v], v)


def encode(g: Graph) -> DfsCode:
    """
    Serialize a connected graph as a DFS code.

    The walk starts at the highest-degree node (smallest id on ties) and
    visits unvisited neighbors by descending degree, then ascending id.
    Arriving at a node emits its forward edge followed by its backward
    edges to already visited nodes, in ascending timestamp order.

    Args:
        g: Connected graph with at least one edge

    Returns:
        DFS code holding every edge of g exactly once

    Raises:
        NotEncodableError: If g has no edges or is disconnected
    """
    if g.edge_count == 0:
        raise NotEncodableError("graph has no edges")
    if not g.is_connected():
        raise NotEncodableError(
            "graph is disconnected; encode its largest component instead"
        )
    adjacency = g.adjacency()
    key = _visit_order([len(row) for row in adjacency])
    start = min(range(g.node_count), key=key)

    timestamps = {start: 0}
    edges: List[DfsEdge] = []
    stack = [(start, iter(sorted(adjacency[start], key=key)))]
    while stack:
        node, candidates = stack[-1]
        for neighbor in candidates:
            if neighbor in timestamps:
                continue
            t_new = len(timestamps)
            timestamps[neighbor] = t_new
            edges.append(DfsEdge(timestamps[node], t_new))
            closed = sorted(
                timestamps[w] for w in adjacency[neighbor] if w in timestamps and w != node
            )
            edges.extend(DfsEdge(t_new, t_w) for t_w in closed)
            stack.append((neighbor, iter(sorted(adjacency[neighbor], key=key))))
            break
        else:
            stack.pop()
    return DfsCode(tuple(edges))


def decode(code: DfsCode) -> Graph:
    """
    Rebuild the graph of a DFS code; nodes are its timestamps.

    Raises:
        InvalidCodeError: If the code violates the DFS-code invariants
    """
    code.validate()
    return Graph(code.node_count, frozenset((e.t_u, e.t_v) for e in code.edges))


@dataclass(frozen=True)
class TokenSequence:
    """
    Index form of a DFS code plus a terminal end-of-sequence step.

    Timestamp slots use the vocabulary 0..max_nodes-1 with max_nodes as the
    end symbol; label slots use 0..n_labels-1 with n_labels as the end symbol.
    """
    steps: Tuple[Step, ...]
    max_nodes: int
    n_labels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(tuple(int(x) for x in s) for s in self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def vocab_sizes(self) -> Tuple[int, ...]:
        return vocab_sizes(self.max_nodes, self.n_labels)

    @property
    def eos(self) -> Step:
        return end_step(self.max_nodes, self.n_labels)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.steps, dtype=np.int64).reshape(len(self.steps), len(SLOT_NAMES))

    @classmethod
    def from_array(cls, array: np.ndarray, max_nodes: int, n_labels: int = 1) -> "TokenSequence":
        return cls(tuple(tuple(row) for row in np.asarray(array).tolist()), max_nodes, n_labels)


def vocab_sizes(max_nodes: int, n_labels: int = 1) -> Tuple[int, ...]:
    """Per-slot vocabulary sizes, end symbol included."""
    return (max_nodes + 1, max_nodes + 1, n_labels + 1, n_labels + 1, n_labels + 1)


def end_step(max_nodes: int, n_labels: int = 1) -> Step:
    """The end-of-sequence step: every slot holds its end symbol."""
    return (max_nodes, max_nodes, n_labels, n_labels, n_labels)


def to_tokens(code: DfsCode, max_nodes: int, n_labels: int = 1,
              max_sequence_length: Optional[int] = None) -> TokenSequence:
    """
    Map a DFS code to token indices and append the end step.

    Raises:
        CapacityError: If a timestamp or label does not fit the vocabulary,
            or the sequence is longer than max_sequence_length
    """
    for position, edge in enumerate(code.edges):
        if max(edge.t_u, edge.t_v) >= max_nodes:
            raise CapacityError(
                f"timestamp {max(edge.t_u, edge.t_v)} at position {position} "
                f"does not fit max_nodes={max_nodes}"
            )
        if max(edge.l_u, edge.l_e, edge.l_v) >= n_labels:
            raise CapacityError(
                f"label at position {position} does not fit n_labels={n_labels}"
            )
    steps = tuple(tuple(edge) for edge in code.edges) + (end_step(max_nodes, n_labels),)
    if max_sequence_length is not None and len(steps) > max_sequence_length:
        raise CapacityError(
            f"sequence of {len(steps)} steps exceeds max_sequence_length={max_sequence_length}"
        )
    return TokenSequence(steps, max_nodes, n_labels)


def from_tokens(seq: TokenSequence) -> DfsCode:
    """
    Turn a (possibly generated) token sequence back into a validated code.

    A step whose t_u slot holds the end symbol terminates the sequence; a
    sequence without one is read to its end.

    Raises:
        EmptyCodeError: If the first step is the end step
        InvalidCodeError: If a slot is out of range, an end symbol appears
            inside a step, or the code violates the DFS-code invariants
    """
    eos = seq.eos
    sizes = seq.vocab_sizes
    edges = []
    for position, step in enumerate(seq.steps):
        if step[0] == eos[0]:
            break
        for slot, (value, size, end) in enumerate(zip(step, sizes, eos)):
            if not 0 <= value < size:
                raise InvalidCodeError(
                    f"slot {SLOT_NAMES[slot]} value {value} outside vocabulary of {size}", position
                )
            if value == end:
                raise InvalidCodeError(
                    f"end symbol in slot {SLOT_NAMES[slot]} of a non-terminal step", position
                )
        edges.append(DfsEdge(*step))
    return DfsCode(tuple(edges)).validate()
