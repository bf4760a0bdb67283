"""Scalable knowledge-graph embeddings: train a dense core, propagate outward."""

__version__ = "0.1.0"

from .blocs import Partition, partition, partition_stats
from .config import PipelineConfig
from .core import CoreSubgraph, select_core_degree, select_core_hybrid
from .embeddings import Checkpoint, EmbeddingMatrix, load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, Diverged, KGPropError
from .evaluate import LinkPredMetrics, Split, link_prediction_eval, queriability_probe, realistic_rank, stratify
from .graph import (
    TripleStore,
    add_inverse_relations,
    graph_stats,
    ingest_triples,
    largest_connected_component,
    parse_triples,
)
from .operators import phi, score
from .propagate import (
    PropagationConfig,
    alignment_energy,
    gradient_equivalence_check,
    propagate_all,
    propagate_subgraph,
    propagate_whole_graph,
)
from .train import TrainConfig, train_core

__all__ = [
    "Checkpoint",
    "ConfigError",
    "CoreSubgraph",
    "DataError",
    "Diverged",
    "EmbeddingMatrix",
    "KGPropError",
    "LinkPredMetrics",
    "Partition",
    "PipelineConfig",
    "PropagationConfig",
    "Split",
    "TrainConfig",
    "TripleStore",
    "add_inverse_relations",
    "alignment_energy",
    "gradient_equivalence_check",
    "graph_stats",
    "ingest_triples",
    "largest_connected_component",
    "link_prediction_eval",
    "load_checkpoint",
    "parse_triples",
    "partition",
    "partition_stats",
    "phi",
    "propagate_all",
    "propagate_subgraph",
    "propagate_whole_graph",
    "queriability_probe",
    "realistic_rank",
    "save_checkpoint",
    "score",
    "select_core_degree",
    "select_core_hybrid",
    "stratify",
    "train_core",
]
