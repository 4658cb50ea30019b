"""
Graph generation tunable to target feature values.

A conditional sequence VAE over DFS codes, trained alternately with a
feature estimator whose feedback pulls generated graphs toward the
requested condition.
"""

__version__ = "0.1.0"

from .dataset import build_manifest, load_manifest, sample_induced_subgraphs, synthetic_graphs
from .dfs_code import DfsCode, TokenSequence, decode, encode, from_tokens, to_tokens
from .graph import FeatureVector, Graph, compute_features
from .model import ConditionalGraphVAE, ModelConfig
from .training import TrainConfig, configure_for_manifest, train_alternate
from .evaluation import GenerationReport, evaluate, generate, kde

__all__ = [
    "build_manifest",
    "load_manifest",
    "sample_induced_subgraphs",
    "synthetic_graphs",
    "DfsCode",
    "TokenSequence",
    "encode",
    "decode",
    "to_tokens",
    "from_tokens",
    "Graph",
    "FeatureVector",
    "compute_features",
    "ConditionalGraphVAE",
    "ModelConfig",
    "TrainConfig",
    "configure_for_manifest",
    "train_alternate",
    "GenerationReport",
    "evaluate",
    "generate",
    "kde",
]
