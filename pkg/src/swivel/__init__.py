"""Swivel: PMI matrix factorization over frequency-interleaved shards."""

from .corpus import (
    CoocAccumulator,
    CoocConfig,
    CooccurrenceCounter,
    Vocabulary,
    build_vocabulary,
    count_cooccurrences,
    tokenize,
)
from .evaluation import (
    AnalogyDataset,
    EmbeddingTable,
    SimilarityDataset,
    analogy_accuracy_by_frequency,
    cosine,
    evaluate_analogy,
    evaluate_similarity,
    nearest_neighbors,
    spearman_rho,
)
from .matrix import CoocMatrix, Shard, ShardPlan, extract_shard, finalize_matrix, shard_of
from .objective import (
    ObjectiveConfig,
    WeightParams,
    confidence,
    loss_observed,
    loss_unobserved,
    pmi,
    shard_objective,
    smoothed_pmi,
)
from .trainer import (
    EmbeddingStore,
    TrainConfig,
    combine_and_export,
    init_embeddings,
    load_checkpoint,
    save_checkpoint,
    train,
    train_step,
)

__all__ = [
    "CoocAccumulator",
    "CoocConfig",
    "CooccurrenceCounter",
    "Vocabulary",
    "build_vocabulary",
    "count_cooccurrences",
    "tokenize",
    "AnalogyDataset",
    "EmbeddingTable",
    "SimilarityDataset",
    "analogy_accuracy_by_frequency",
    "cosine",
    "evaluate_analogy",
    "evaluate_similarity",
    "nearest_neighbors",
    "spearman_rho",
    "CoocMatrix",
    "Shard",
    "ShardPlan",
    "extract_shard",
    "finalize_matrix",
    "shard_of",
    "ObjectiveConfig",
    "WeightParams",
    "confidence",
    "loss_observed",
    "loss_unobserved",
    "pmi",
    "shard_objective",
    "smoothed_pmi",
    "EmbeddingStore",
    "TrainConfig",
    "combine_and_export",
    "init_embeddings",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "train_step",
]

__version__ = "0.1.0"
