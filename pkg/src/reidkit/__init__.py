"""Metric-learning re-identification toolkit over embedding stores."""

from .core import (
    ALL_CONDITIONS,
    Arrangement,
    Condition,
    EmbeddingRecord,
    EmbeddingSet,
    RngStream,
    Split,
    StoreFormatError,
    Viewpoint,
    rng_new,
    rng_shuffle,
    store_paths,
    store_read,
    store_write,
)
from .evaluator import (
    EvalReport,
    average_precision,
    build_query_gallery,
    cross_condition_eval,
    distance_distributions,
    evaluate,
    l2_normalize,
    map_at_k,
    precision_at,
    r1,
    rank,
)
from .mining import (
    PKConfig,
    Triplet,
    mine_hard,
    mine_semihard,
    pairwise_euclidean,
    pk_sample,
    triplet_loss,
)
from .trainer import (
    LinearHead,
    TrainConfig,
    TrainHistory,
    adamw_step,
    head_forward,
    load_head,
    loss_backward,
    plateau_update,
    save_head,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_CONDITIONS",
    "Arrangement",
    "Condition",
    "EmbeddingRecord",
    "EmbeddingSet",
    "EvalReport",
    "LinearHead",
    "PKConfig",
    "RngStream",
    "Split",
    "StoreFormatError",
    "TrainConfig",
    "TrainHistory",
    "Triplet",
    "Viewpoint",
    "adamw_step",
    "average_precision",
    "build_query_gallery",
    "cross_condition_eval",
    "distance_distributions",
    "evaluate",
    "head_forward",
    "l2_normalize",
    "load_head",
    "loss_backward",
    "map_at_k",
    "mine_hard",
    "mine_semihard",
    "pairwise_euclidean",
    "pk_sample",
    "plateau_update",
    "precision_at",
    "r1",
    "rank",
    "rng_new",
    "rng_shuffle",
    "save_head",
    "store_paths",
    "store_read",
    "store_write",
    "train",
    "triplet_loss",
]
