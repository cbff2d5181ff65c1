"""Unsupervised graph anomaly detection from self-supervised contextual views.

Each node is judged by how well small random-walk neighborhoods around it
can both reconstruct its features and be told apart from other nodes'
neighborhoods. Training is plain NumPy with hand-derived gradients.
"""

from .bench import (InjectionConfig, Manifest, RocCurve, ToyBenchmark,
                    inject_anomalies, make_toy_benchmark, read_manifest,
                    roc_auc, write_manifest, write_roc)
from .datasets import convert_linqs
from .graph import (DataError, Graph, NormalizedAdj, NumericError, from_edges,
                    load_graph, normalize_adjacency, save_graph, subgraph)
from .model import (BatchTrace, ForwardOutputs, ForwardTrace, Gradients,
                    LossGrads, ModelParams, ViewBatch, backward_full,
                    batch_backward, batch_forward, config_hash, decode_view,
                    discriminate, encode_target, encode_view,
                    encode_view_batch, forward_full, init_params,
                    load_checkpoint, pair_logit, readout, save_checkpoint)
from .scoring import (MODES, ScoreTable, contrastive_raw, generative_raw,
                      read_scores, scale_scores, score_all, write_scores)
from .training import (AdamState, BatchLossReport, EpochStats, RunConfig,
                       adam_step, combined_loss, contrastive_loss,
                       generative_loss, init_for, train, write_loss_log)
from .views import (SamplerConfig, SubgraphView, negative_assignment,
                    random_derangement, sample_negative_views, sample_view,
                    sample_view_pair, stream)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "BatchLossReport", "BatchTrace", "DataError", "EpochStats",
    "ForwardOutputs", "ForwardTrace", "Gradients", "Graph", "InjectionConfig",
    "LossGrads", "MODES", "Manifest", "ModelParams", "NormalizedAdj",
    "NumericError", "RocCurve", "RunConfig", "SamplerConfig", "ScoreTable",
    "SubgraphView", "ToyBenchmark", "ViewBatch", "adam_step", "backward_full",
    "batch_backward", "batch_forward", "combined_loss", "config_hash",
    "contrastive_loss", "contrastive_raw", "convert_linqs", "decode_view",
    "discriminate",
    "encode_target", "encode_view", "encode_view_batch", "forward_full",
    "from_edges", "generative_loss", "generative_raw", "init_for",
    "init_params", "inject_anomalies", "load_checkpoint", "load_graph",
    "make_toy_benchmark", "negative_assignment", "normalize_adjacency",
    "pair_logit", "random_derangement", "read_manifest", "read_scores",
    "readout", "roc_auc", "sample_negative_views", "sample_view",
    "sample_view_pair", "save_checkpoint", "save_graph", "scale_scores",
    "score_all", "stream", "subgraph", "train", "write_loss_log",
    "write_manifest", "write_roc", "write_scores",
]
