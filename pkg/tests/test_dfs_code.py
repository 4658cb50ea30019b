"""
Tests for DFS-code serialization and the token form.
"""

import itertools
from pathlib import Path

import numpy as np
import pytest

from tunable_graphgen.dfs_code import (
    DfsCode,
    DfsEdge,
    TokenSequence,
    decode,
    encode,
    end_step,
    from_tokens,
    to_tokens,
    vocab_sizes,
)
from tunable_graphgen.errors import CapacityError, EmptyCodeError, InvalidCodeError, NotEncodableError
from tunable_graphgen.graph import Graph

DATA_DIR = Path(__file__).parent / "data"


def pairs(code: DfsCode):
    return [(e.t_u, e.t_v) for e in code]


def random_connected_graph(rng: np.random.Generator, n: int) -> Graph:
    """Random spanning tree plus random extra edges."""
    order = rng.permutation(n).tolist()
    edges = {
        tuple(sorted((order[i], order[int(rng.integers(i))]))) for i in range(1, n)
    }
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() < 0.3:
            edges.add((u, v))
    return Graph.from_edges(edges, node_count=n)


def is_isomorphic(a: Graph, b: Graph) -> bool:
    """Brute-force permutation oracle."""
    if a.node_count != b.node_count or a.edge_count != b.edge_count:
        return False
    if sorted(a.degrees()) != sorted(b.degrees()):
        return False
    return any(
        a.relabel(permutation) == b for permutation in itertools.permutations(range(a.node_count))
    )


def test_encode_examples(triangle, path3):
    """Hand-traced codes."""
    assert pairs(encode(triangle)) == [(0, 1), (1, 2), (2, 0)]
    assert pairs(encode(path3)) == [(0, 1), (0, 2)]
    assert pairs(encode(Graph.from_edges([(0, 1)]))) == [(0, 1)]


def test_encode_starts_at_highest_degree(star):
    """The hub gets timestamp 0, so every edge starts there."""
    assert pairs(encode(star)) == [(0, 1), (0, 2), (0, 3)]


def test_encode_labels_are_constant(k4):
    """Unlabeled graphs carry the constant label symbol in every label slot."""
    for edge in encode(k4):
        assert (edge.l_u, edge.l_e, edge.l_v) == (0, 0, 0)


def test_encode_rejects_unencodable():
    """Disconnected and edgeless graphs."""
    with pytest.raises(NotEncodableError):
        encode(Graph.from_edges([(0, 1), (2, 3)]))
    with pytest.raises(NotEncodableError):
        encode(Graph(3))


def test_decode_examples(triangle):
    """Inverse of the hand-traced codes."""
    assert decode(DfsCode(((0, 1), (1, 2), (2, 0)))) == triangle
    assert decode(DfsCode(((0, 1),))) == Graph.from_edges([(0, 1)])


@pytest.mark.parametrize("edges,position", [
    (((0, 1), (2, 3)), 1),
    (((0, 1), (1, 3)), 1),
    (((1, 0),), 0),
    (((0, 1), (0, 1)), 1),
    (((0, 1), (1, 2), (2, 0), (2, 0)), 3),
    (((0, 1), (1, 2), (1, 0)), 2),
    (((0, 1), (1, 1)), 1),
])
def test_decode_rejects_invalid_codes(edges, position):
    """Invalid codes report the offending position."""
    with pytest.raises(InvalidCodeError) as info:
        decode(DfsCode(edges))
    assert info.value.position == position


def test_decode_rejects_empty_code():
    with pytest.raises(EmptyCodeError):
        decode(DfsCode(()))


def test_round_trip_isomorphic():
    """200 seeded random connected graphs survive encode and decode."""
    rng = np.random.default_rng(11)
    for _ in range(200):
        g = random_connected_graph(rng, int(rng.integers(3, 9)))
        code = encode(g)
        assert len(code) == g.edge_count
        assert is_isomorphic(decode(code), g)


def test_round_trip_larger_graphs_by_fingerprint():
    """100 seeded graphs of 9-30 nodes: too large for brute force, compared by fingerprint."""
    rng = np.random.default_rng(17)
    for _ in range(100):
        g = random_connected_graph(rng, int(rng.integers(9, 31)))
        decoded = decode(encode(g))
        assert decoded.fingerprint() == g.fingerprint()
        assert decoded.is_connected()


def test_encode_is_canonical_for_decoded_graphs():
    """Encoding a decoded code gives back the same code."""
    rng = np.random.default_rng(5)
    for _ in range(50):
        code = encode(random_connected_graph(rng, int(rng.integers(3, 8))))
        assert encode(decode(code)) == code


def test_debug_text_golden(triangle):
    """Debug text matches the stored golden file and parses back."""
    expected = (DATA_DIR / "triangle.dfs").read_text()
    code = encode(triangle)
    assert code.to_text() + "\n" == expected
    assert DfsCode.from_text(expected) == code


def test_from_text_rejects_short_lines():
    with pytest.raises(InvalidCodeError):
        DfsCode.from_text("0 1 0")


def test_to_tokens_examples(triangle):
    """Direct index mapping plus a terminal end step."""
    seq = to_tokens(DfsCode(((0, 1),)), max_nodes=3)
    assert seq.steps == ((0, 1, 0, 0, 0), (3, 3, 1, 1, 1))
    assert seq.eos == end_step(3)
    assert seq.vocab_sizes == vocab_sizes(3) == (4, 4, 2, 2, 2)

    seq = to_tokens(encode(triangle), max_nodes=3)
    assert len(seq) == 4
    with pytest.raises(CapacityError):
        to_tokens(encode(triangle), max_nodes=2)
    with pytest.raises(CapacityError):
        to_tokens(encode(triangle), max_nodes=3, max_sequence_length=3)


def test_from_tokens_round_trip(k4, triangle, path3):
    """to_tokens then from_tokens returns the code."""
    for g in (k4, triangle, path3):
        code = encode(g)
        assert from_tokens(to_tokens(code, max_nodes=6)) == code


def test_from_tokens_ignores_steps_after_end(triangle):
    """Anything after the end step is padding."""
    seq = to_tokens(encode(triangle), max_nodes=3)
    padded = TokenSequence(seq.steps + ((0, 2, 0, 0, 0),), 3)
    assert from_tokens(padded) == encode(triangle)


def test_from_tokens_without_end_step():
    """A sequence cut off by max_steps is read to its end."""
    seq = TokenSequence(((0, 1, 0, 0, 0), (1, 2, 0, 0, 0)), max_nodes=4)
    assert pairs(from_tokens(seq)) == [(0, 1), (1, 2)]


def test_from_tokens_errors():
    """Empty, duplicate, stray end symbols and out-of-range slots."""
    eos = end_step(3)
    with pytest.raises(EmptyCodeError):
        from_tokens(TokenSequence((eos,), 3))
    with pytest.raises(InvalidCodeError):
        from_tokens(TokenSequence(((0, 1, 0, 0, 0), (0, 1, 0, 0, 0), eos), 3))
    with pytest.raises(InvalidCodeError) as info:
        from_tokens(TokenSequence(((0, 1, 0, 0, 0), (1, 3, 0, 0, 0), eos), 3))
    assert info.value.position == 1
    with pytest.raises(InvalidCodeError):
        from_tokens(TokenSequence(((0, 1, 0, 1, 0), eos), 3))
    with pytest.raises(InvalidCodeError):
        from_tokens(TokenSequence(((0, 5, 0, 0, 0), eos), 3))


def test_token_array_round_trip(triangle):
    """Arrays carry the steps unchanged."""
    seq = to_tokens(encode(triangle), max_nodes=4)
    array = seq.to_array()
    assert array.shape == (4, 5)
    assert TokenSequence.from_array(array, 4) == seq


def test_dfs_edge_direction():
    assert DfsEdge(0, 1).is_forward
    assert not DfsEdge(2, 0).is_forward
