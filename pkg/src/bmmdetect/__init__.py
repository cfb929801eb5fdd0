"""Multimodal misconduct-risk classifier toolkit.

Title embeddings + batch self-attention, dummy/normalized journal metadata
through a ReLU feedforward encoder, softmax fusion head; plus k-fold
cross-validation, modality ablation, permutation importance, biserial
correlation analysis, and a planted-signal synthetic corpus generator.
"""

from .corpus import (
    AffiliationInfo,
    FeatureSchema,
    JournalMetadata,
    LLMFeatures,
    PaperFlags,
    PaperRecord,
    encode,
    encode_matrix,
    fit_schema,
    load_corpus,
    save_corpus,
    split_folds,
)
from .embed import EmbedConfig, EmbeddingRequest, embed_titles, hash_embed
from .evaluation import CvSettings, compare_external, confusion, metrics, pr_auc, roc_auc, run_cv
from .jats import DEFAULT_LEXICON, extract_counts, extract_keywords, parse_jats
from .model import BmmConfig, TrainConfig, TrainedBmm, fit_bmm, predict, train
from .analysis import (
    biserial,
    correlate_corpus,
    permutation_importance,
    point_biserial,
    run_ablation,
)
from .synth import SynthConfig, generate, oracle_auc, oracle_confusion

__version__ = "0.1.0"

__all__ = [
    "AffiliationInfo",
    "BmmConfig",
    "CvSettings",
    "DEFAULT_LEXICON",
    "EmbedConfig",
    "EmbeddingRequest",
    "FeatureSchema",
    "JournalMetadata",
    "LLMFeatures",
    "PaperFlags",
    "PaperRecord",
    "SynthConfig",
    "TrainConfig",
    "TrainedBmm",
    "biserial",
    "compare_external",
    "confusion",
    "correlate_corpus",
    "embed_titles",
    "encode",
    "encode_matrix",
    "extract_counts",
    "extract_keywords",
    "fit_bmm",
    "fit_schema",
    "generate",
    "hash_embed",
    "load_corpus",
    "metrics",
    "oracle_auc",
    "oracle_confusion",
    "parse_jats",
    "permutation_importance",
    "point_biserial",
    "pr_auc",
    "predict",
    "roc_auc",
    "run_ablation",
    "run_cv",
    "save_corpus",
    "split_folds",
    "train",
    "__version__",
]
