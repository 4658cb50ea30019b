"""
Shared test fixtures for the tunable-graphgen package.
"""

import tempfile

import pytest
import torch

from tunable_graphgen.dataset import build_manifest
from tunable_graphgen.graph import Graph
from tunable_graphgen.model import ModelConfig
from tunable_graphgen.training import TrainConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training experiments (minutes of CPU time)")


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless a marker expression was given."""
    if config.getoption("markexpr"):
        return
    skip = pytest.mark.skip(reason="slow; select with -m slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def triangle():
    return Graph.from_edges([(0, 1), (1, 2), (2, 0)])


@pytest.fixture
def path3():
    """Path 0-1-2."""
    return Graph.from_edges([(0, 1), (1, 2)])


@pytest.fixture
def k4():
    return Graph.from_edges([(u, v) for u in range(4) for v in range(u + 1, 4)])


@pytest.fixture
def star():
    """Hub 0 with three leaves."""
    return Graph.from_edges([(0, 1), (0, 2), (0, 3)])


@pytest.fixture
def k4_minus_edge():
    return Graph.from_edges([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)])


@pytest.fixture
def cycle5():
    return Graph.from_edges([(i, (i + 1) % 5) for i in range(5)])


def toy_graphs():
    """Connected graphs of at most 4 nodes and 4 edges."""
    return [
        Graph.from_edges([(0, 1)]),
        Graph.from_edges([(0, 1), (1, 2)]),
        Graph.from_edges([(0, 1), (1, 2), (2, 0)]),
        Graph.from_edges([(0, 1), (1, 2), (2, 3)]),
        Graph.from_edges([(0, 1), (0, 2), (0, 3)]),
        Graph.from_edges([(0, 1), (1, 2), (2, 3), (3, 0)]),
        Graph.from_edges([(0, 1), (1, 2), (2, 0), (0, 3)]),
    ]


@pytest.fixture
def toy_manifest():
    """50 small graphs sized for the tiny model (max_nodes 4, 5 steps)."""
    graphs = [toy_graphs()[i % 7] for i in range(50)]
    return build_manifest(graphs, ["aspl"], headroom=0.0)


@pytest.fixture
def tiny_config():
    """Model small enough for finite differences."""
    return ModelConfig(
        max_nodes=4,
        n_labels=1,
        max_sequence_length=5,
        condition_dim=1,
        latent_dim=4,
        embedding_dim=3,
        encoder_hidden=6,
        decoder_hidden=6,
        estimator_pre_fc=5,
        estimator_hidden=8,
        kl_anneal_fraction=0.0,
    )


@pytest.fixture
def tiny_train_config():
    return TrainConfig(
        batch_size=16,
        generator_epochs_per_phase=2,
        estimator_epochs_per_phase=3,
        alternate_iterations=2,
        learning_rate=1e-2,
        seed=7,
        dtype="float64",
        log_every=1,
    )


@pytest.fixture
def float64():
    """Run a test with float64 as the default torch dtype."""
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)


@pytest.fixture
def temp_dir():
    """Create a temporary output directory for testing."""
    with tempfile.TemporaryDirectory() as directory:
        yield directory
