"""Reward computation and SGDET evaluation engine for generative scene graphs."""

from .augment import (
    CandidateTriplet,
    FilterConfig,
    build_sft_record,
    corpus_stats,
    filter_candidates,
    validate_candidate,
)
from .clustering import ClusterSet, DbscanParams, assign_prediction, build_prototypes, dbscan
from .embeddings import (
    EmbeddingSource,
    EmbeddingTable,
    RemoteEmbeddingProvider,
    build_synthetic_table,
    cosine,
    reward_sim,
)
from .errors import EngineError
from .evaluation import (
    EvalConfig,
    EvalReport,
    PartitionSpec,
    aggregate,
    evaluate_scene,
    partition_predicates,
    triplet_correct,
)
from .graph import (
    BoundingBox,
    DatasetProfile,
    ObjectInstance,
    RelationTriplet,
    SceneGraph,
    canonical_form,
    canonical_key,
    validate_graph,
)
from .gspo import (
    GspoResult,
    PolicyGroup,
    PolicySample,
    group_advantages,
    gspo_objective,
    sequence_ratio,
)
from .matching import MatchConfig, Matching, iou, l1_norm, match_cost, solve_matching
from .parsing import (
    CotRecord,
    ParsedCompletion,
    failure_rate,
    format_reward,
    parse_completion,
    serialize_cot,
)
from .rewards import (
    RewardBreakdown,
    RewardConfig,
    category_reward,
    coarse_reward,
    composite_reward,
    fine_reward,
    node_reward,
    predicate_weight,
)
from .store import GroundTruthStore

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "ObjectInstance", "RelationTriplet", "SceneGraph", "DatasetProfile",
    "validate_graph", "canonical_key", "canonical_form",
    "ParsedCompletion", "CotRecord", "parse_completion", "format_reward", "serialize_cot",
    "failure_rate",
    "EmbeddingSource", "EmbeddingTable", "RemoteEmbeddingProvider", "build_synthetic_table",
    "cosine", "reward_sim",
    "MatchConfig", "Matching", "iou", "l1_norm", "match_cost", "solve_matching",
    "DbscanParams", "ClusterSet", "dbscan", "build_prototypes", "assign_prediction",
    "RewardConfig", "RewardBreakdown", "category_reward", "node_reward", "predicate_weight",
    "fine_reward", "coarse_reward", "composite_reward",
    "PolicySample", "PolicyGroup", "GspoResult", "group_advantages", "sequence_ratio",
    "gspo_objective",
    "EvalConfig", "PartitionSpec", "EvalReport", "triplet_correct", "evaluate_scene",
    "aggregate", "partition_predicates",
    "CandidateTriplet", "FilterConfig", "validate_candidate", "filter_candidates",
    "build_sft_record", "corpus_stats",
    "GroundTruthStore", "EngineError",
]
