"""Ego-net friend suggestions: ego-net materialization, in-ego models and out-ego aggregation."""

from .builder import BloomFilter, BuilderConfig, build_all_egonets, build_bloom, emit_wedges, group_by_ego, verify_join
from .evaluation import EvalReport, evaluate, ndcg_at_k, split_dataset
from .graph import (
    EgoNet,
    Graph,
    GraphFormatError,
    TypedEdge,
    derive_node_features,
    load_graph,
    read_egonets,
    save_graph,
    transform_time,
    write_egonets,
)
from .heuristics import (
    adamic_adar_local,
    cluster_friendship_score,
    common_neighbors_local,
    label_propagation_clusters,
    weighted_adamic_adar_local,
)
from .pipeline import AggregatorKind, LocalScore, aggregate, run_gefs, score_egonets, top_k_suggestions
from .synthetic import SyntheticConfig, generate_synthetic

__version__ = "0.1.0"
