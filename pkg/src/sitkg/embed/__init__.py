"""Knowledge-graph embedding models trained on the label projection."""

from .checkpoint import load_checkpoint, save_checkpoint
from .literal import literal_features, literal_gate
from .models import (
    MODELS,
    EmbeddingConfig,
    ModelParams,
    UnknownEntity,
    init_params,
    rank_candidates,
    score,
)
from .sampling import NoValidCorruption, negative_sample
from .training import NonFiniteLoss, gradient_check, train

__all__ = [
    "MODELS",
    "EmbeddingConfig",
    "ModelParams",
    "NoValidCorruption",
    "NonFiniteLoss",
    "UnknownEntity",
    "gradient_check",
    "init_params",
    "literal_features",
    "literal_gate",
    "load_checkpoint",
    "negative_sample",
    "rank_candidates",
    "save_checkpoint",
    "score",
    "train",
]
