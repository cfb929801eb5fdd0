"""The fused classifier: batch attention over title vectors, a journal
feature encoder, and a softmax head, trained with Adam.

Fusion modes: ``inter_only`` feeds concat(B_i, J_i) to the head (the narrow
reading of the model equations); ``intra_plus_inter`` feeds
concat(b_i, B_i, J_i), matching the stated classifier input width of twice
the embedding size plus the journal feature size. Both are one flag apart.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import nncore
from .corpus import FeatureSchema, PaperRecord, encode_matrix
from .nncore import AdamState, ParamBlock

FUSION_MODES = ("inter_only", "intra_plus_inter")
CONTEXT_POLICIES = ("fixed_order", "singleton")
MODEL_FORMAT_VERSION = 1


class ModelError(ValueError):
    """Raised for invalid configurations or unusable training inputs."""


@dataclass(frozen=True)
class BmmConfig:
    """Architecture of the fused classifier."""

    d: int
    journal_dim: int
    fusion_mode: str = "intra_plus_inter"
    scaled_attention: bool = False
    journal_hidden: int = 16
    seed: int = 0
    text_enabled: bool = True

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ModelError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.text_enabled and self.d < 1:
            raise ModelError(f"embedding size must be >= 1, got {self.d}")
        if self.journal_dim < 0:
            raise ModelError("journal_dim must be >= 0")
        if self.journal_dim > 0 and self.journal_hidden < 1:
            raise ModelError("journal_hidden must be >= 1")
        if not self.text_enabled and self.journal_dim == 0:
            raise ModelError("model needs at least one input path (text or journal)")

    @property
    def fused_dim(self) -> int:
        width = 0
        if self.text_enabled:
            width += 2 * self.d if self.fusion_mode == "intra_plus_inter" else self.d
        if self.journal_dim > 0:
            width += self.journal_hidden
        return width


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one training run."""

    batch_size: int = 32
    epochs: int = 30
    lr: float = 1e-3
    class_weights: tuple[float, float] = (1.0, 1.0)
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")


@dataclass
class BmmParams:
    """All trainable blocks; absent paths are None."""

    w_q: ParamBlock | None
    w_k: ParamBlock | None
    w_v: ParamBlock | None
    journal_w: ParamBlock | None
    journal_b: ParamBlock | None
    head_w: ParamBlock
    head_c: ParamBlock

    def blocks(self) -> list[ParamBlock]:
        maybe = (self.w_q, self.w_k, self.w_v, self.journal_w, self.journal_b, self.head_w, self.head_c)
        return [p for p in maybe if p is not None]


@dataclass(frozen=True)
class PredictionBatch:
    """Per-record class probability pairs, in the caller's record order."""

    ids: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        if self.probs.shape != (len(self.ids), 2):
            raise ModelError(f"probs shape {self.probs.shape} does not match {len(self.ids)} ids")
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-9):
            raise ModelError("probability pairs must sum to 1")

    @property
    def positive(self) -> np.ndarray:
        return self.probs[:, 1]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: BmmConfig, seed: int | None = None) -> BmmParams:
    """Uniform Glorot weights, zero biases, one fixed draw order per seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    w_q = w_k = w_v = journal_w = journal_b = None
    if config.text_enabled:
        d = config.d
        w_q = ParamBlock.of("w_q", _glorot(rng, d, d))
        w_k = ParamBlock.of("w_k", _glorot(rng, d, d))
        w_v = ParamBlock.of("w_v", _glorot(rng, d, d))
    if config.journal_dim > 0:
        journal_w = ParamBlock.of("journal_w", _glorot(rng, config.journal_dim, config.journal_hidden))
        journal_b = ParamBlock.of("journal_b", np.zeros((1, config.journal_hidden)))
    head_w = ParamBlock.of("head_w", _glorot(rng, config.fused_dim, 2))
    head_c = ParamBlock.of("head_c", np.zeros((1, 2)))
    return BmmParams(w_q, w_k, w_v, journal_w, journal_b, head_w, head_c)


@dataclass
class ForwardCache:
    attn: nncore.AttentionCache | None
    journal_linear: nncore.LinearCache | None
    journal_relu: nncore.ReluCache | None
    head: nncore.LinearCache
    text_cols: int


def forward_batch(
    encoded: np.ndarray | None,
    embeddings: np.ndarray | None,
    params: BmmParams,
    config: BmmConfig,
):
    """One forward pass over a context batch; returns (probs, cache)."""
    parts = []
    attn_cache = journal_lin = journal_relu = None
    text_cols = 0
    if config.text_enabled:
        if embeddings is None:
            raise ModelError("text path enabled but no embeddings given")
        if embeddings.shape[1] != config.d:
            raise ModelError(f"embeddings have d={embeddings.shape[1]}, config expects {config.d}")
        mixed, attn_cache = nncore.attention_forward(
            embeddings, params.w_q, params.w_k, params.w_v, scaled=config.scaled_attention
        )
        if config.fusion_mode == "intra_plus_inter":
            parts.extend([embeddings, mixed])
        else:
            parts.append(mixed)
        text_cols = sum(p.shape[1] for p in parts)
    if config.journal_dim > 0:
        if encoded is None or encoded.shape[1] != config.journal_dim:
            raise ModelError("encoded features do not match config.journal_dim")
        hidden, journal_lin = nncore.linear_forward(encoded, params.journal_w, params.journal_b)
        activated, journal_relu = nncore.relu(hidden)
        parts.append(activated)
    fused = np.concatenate(parts, axis=1)
    logits, head_cache = nncore.linear_forward(fused, params.head_w, params.head_c)
    probs = nncore.softmax_rows(logits)
    return probs, ForwardCache(attn_cache, journal_lin, journal_relu, head_cache, text_cols)


def backward_batch(dlogits: np.ndarray, cache: ForwardCache, config: BmmConfig) -> None:
    """Accumulate parameter gradients from the loss gradient w.r.t. logits."""
    d_fused = nncore.linear_backward(dlogits, cache.head)
    col = cache.text_cols
    if config.text_enabled:
        if config.fusion_mode == "intra_plus_inter":
            d_mixed = d_fused[:, config.d : 2 * config.d]
        else:
            d_mixed = d_fused[:, : config.d]
        nncore.attention_backward(d_mixed, cache.attn)
    if config.journal_dim > 0:
        d_hidden = nncore.relu_backward(d_fused[:, col:], cache.journal_relu)
        nncore.linear_backward(d_hidden, cache.journal_linear)


def _embedding_matrix(records, embeddings: Mapping[str, np.ndarray], d: int) -> np.ndarray:
    missing = [r.id for r in records if r.id not in embeddings]
    if missing:
        raise ModelError(f"missing embeddings for ids: {missing[:5]}")
    matrix = np.stack([np.asarray(embeddings[r.id], dtype=np.float64) for r in records])
    if matrix.shape[1] != d:
        raise ModelError(f"embeddings have d={matrix.shape[1]}, expected {d}")
    return matrix


def train(
    records: Sequence[PaperRecord],
    schema: FeatureSchema,
    embeddings: Mapping[str, np.ndarray] | None,
    config: BmmConfig,
    train_config: TrainConfig,
) -> tuple[BmmParams, list[float]]:
    """Minibatch training; deterministic for a fixed seed.

    Each epoch shuffles, forms fixed-size batches (final partial batch kept),
    and applies forward / cross-entropy / backward / Adam. Returns the
    parameters and the per-epoch mean per-record loss history.
    """
    labels = np.array([r.label for r in records], dtype=np.int64)
    if len(set(labels.tolist())) < 2:
        raise ModelError("training set must contain both classes")
    if schema.journal_dim != config.journal_dim:
        raise ModelError(f"schema journal_dim {schema.journal_dim} != config {config.journal_dim}")
    encoded = encode_matrix(records, schema) if config.journal_dim > 0 else None
    emb = _embedding_matrix(records, embeddings, config.d) if config.text_enabled else None

    params = init_params(config)
    adam = AdamState.for_params(params.blocks(), lr=train_config.lr)
    rng = np.random.default_rng(train_config.seed)
    n = len(records)
    history: list[float] = []
    best = math.inf
    stale = 0
    for _ in range(train_config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            probs, cache = forward_batch(
                None if encoded is None else encoded[batch],
                None if emb is None else emb[batch],
                params,
                config,
            )
            loss, dlogits = nncore.cross_entropy(probs, labels[batch], train_config.class_weights)
            backward_batch(dlogits, cache, config)
            nncore.adam_step(params.blocks(), adam)
            total += loss * len(batch)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise ModelError(f"training loss became non-finite at epoch {len(history) + 1}")
        history.append(epoch_loss)
        if train_config.patience is not None:
            if epoch_loss < best:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= train_config.patience:
                    break
    return params, history


def predict(
    records: Sequence[PaperRecord],
    schema: FeatureSchema,
    embeddings: Mapping[str, np.ndarray] | None,
    params: BmmParams,
    config: BmmConfig,
    context_policy: str = "fixed_order",
    batch_size: int = 32,
) -> PredictionBatch:
    """Score records in deterministic context batches.

    fixed_order sorts records by id and attends within consecutive batches of
    ``batch_size``; singleton uses one-record batches so every prediction is
    independent of the rest of the dataset. Output order = input order.
    """
    if context_policy not in CONTEXT_POLICIES:
        raise ModelError(f"context_policy must be one of {CONTEXT_POLICIES}")
    if context_policy == "singleton":
        batch_size = 1
    encoded = encode_matrix(records, schema) if config.journal_dim > 0 else None
    emb = _embedding_matrix(records, embeddings, config.d) if config.text_enabled else None
    n = len(records)
    probs = np.zeros((n, 2), dtype=np.float64)
    order = sorted(range(n), key=lambda i: records[i].id)
    for start in range(0, n, batch_size):
        batch = order[start : start + batch_size]
        batch_probs, _ = forward_batch(
            None if encoded is None else encoded[batch],
            None if emb is None else emb[batch],
            params,
            config,
        )
        probs[batch] = batch_probs
    return PredictionBatch(ids=tuple(r.id for r in records), probs=probs)


# ---------------------------------------------------------------------------
# Trained-model container
# ---------------------------------------------------------------------------


@dataclass
class TrainedBmm:
    """A trained classifier bundled with its schema and architecture."""

    config: BmmConfig
    schema: FeatureSchema
    params: BmmParams
    history: list[float] = field(default_factory=list)

    def predict(self, records, embeddings, context_policy="fixed_order", batch_size=32) -> PredictionBatch:
        return predict(records, self.schema, embeddings, self.params, self.config, context_policy, batch_size)

    def positive_scores(self, records, embeddings, context_policy="singleton", batch_size=32) -> np.ndarray:
        return self.predict(records, embeddings, context_policy, batch_size).positive

    def save(self, path) -> None:
        arrays = {p.name: p.value for p in self.params.blocks()}
        meta = {
            "model_format_version": MODEL_FORMAT_VERSION,
            "kind": "bmm",
            "config": {
                "d": self.config.d,
                "journal_dim": self.config.journal_dim,
                "fusion_mode": self.config.fusion_mode,
                "scaled_attention": self.config.scaled_attention,
                "journal_hidden": self.config.journal_hidden,
                "seed": self.config.seed,
                "text_enabled": self.config.text_enabled,
            },
            "schema": self.schema.to_json_dict(),
            "history": list(self.history),
        }
        nncore.save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "TrainedBmm":
        arrays, meta = nncore.load_checkpoint(path)
        if meta.get("model_format_version") != MODEL_FORMAT_VERSION or meta.get("kind") != "bmm":
            raise ModelError(f"not a model checkpoint of a supported version: {path}")
        config = BmmConfig(**meta["config"])
        schema = FeatureSchema.from_json_dict(meta["schema"])

        def block(name):
            return ParamBlock.of(name, arrays[name]) if name in arrays else None

        params = BmmParams(
            w_q=block("w_q"),
            w_k=block("w_k"),
            w_v=block("w_v"),
            journal_w=block("journal_w"),
            journal_b=block("journal_b"),
            head_w=block("head_w"),
            head_c=block("head_c"),
        )
        expected = init_params(config)
        for want, got in zip(expected.blocks(), params.blocks()):
            if want.value.shape != got.value.shape:
                raise ModelError(f"array {got.name} has shape {got.value.shape}, expected {want.value.shape}")
        return cls(config=config, schema=schema, params=params, history=list(meta.get("history", [])))


def fit_bmm(
    records: Sequence[PaperRecord],
    schema: FeatureSchema,
    embeddings: Mapping[str, np.ndarray] | None,
    *,
    d: int = 0,
    fusion_mode: str = "intra_plus_inter",
    scaled_attention: bool = False,
    journal_hidden: int = 16,
    text_enabled: bool = True,
    seed: int = 0,
    train_config: TrainConfig | None = None,
) -> TrainedBmm:
    """Convenience constructor: build the config from the schema and train."""
    config = BmmConfig(
        d=d,
        journal_dim=schema.journal_dim,
        fusion_mode=fusion_mode,
        scaled_attention=scaled_attention,
        journal_hidden=journal_hidden,
        seed=seed,
        text_enabled=text_enabled,
    )
    tcfg = train_config or TrainConfig()
    params, history = train(records, schema, embeddings, config, tcfg)
    return TrainedBmm(config=config, schema=schema, params=params, history=history)


# ---------------------------------------------------------------------------
# Linear baseline (attention-free comparator)
# ---------------------------------------------------------------------------


@dataclass
class TrainedBaseline:
    """Softmax-linear comparator: B_i := b_i, no journal hidden layer."""

    d: int
    schema: FeatureSchema
    head_w: ParamBlock
    head_c: ParamBlock
    history: list[float] = field(default_factory=list)

    def predict(self, records, embeddings, context_policy="fixed_order", batch_size=32) -> PredictionBatch:
        fused = _baseline_inputs(records, self.schema, embeddings, self.d)
        logits, _ = nncore.linear_forward(fused, self.head_w, self.head_c)
        return PredictionBatch(ids=tuple(r.id for r in records), probs=nncore.softmax_rows(logits))

    def positive_scores(self, records, embeddings, context_policy="singleton", batch_size=32) -> np.ndarray:
        return self.predict(records, embeddings).positive


def _baseline_inputs(records, schema, embeddings, d) -> np.ndarray:
    parts = []
    if d > 0:
        parts.append(_embedding_matrix(records, embeddings, d))
    if schema.journal_dim > 0:
        parts.append(encode_matrix(records, schema))
    if not parts:
        raise ModelError("baseline needs embeddings or journal features")
    return np.concatenate(parts, axis=1)


def linear_baseline_train(
    records: Sequence[PaperRecord],
    schema: FeatureSchema,
    embeddings: Mapping[str, np.ndarray] | None,
    train_config: TrainConfig,
    d: int = 0,
    seed: int = 0,
) -> TrainedBaseline:
    """Train the attention-free linear comparator with the same loop shape."""
    labels = np.array([r.label for r in records], dtype=np.int64)
    if len(set(labels.tolist())) < 2:
        raise ModelError("training set must contain both classes")
    fused = _baseline_inputs(records, schema, embeddings, d)
    rng = np.random.default_rng(seed)
    head_w = ParamBlock.of("head_w", _glorot(rng, fused.shape[1], 2))
    head_c = ParamBlock.of("head_c", np.zeros((1, 2)))
    adam = AdamState.for_params([head_w, head_c], lr=train_config.lr)
    shuffle = np.random.default_rng(train_config.seed)
    n = len(records)
    history: list[float] = []
    for _ in range(train_config.epochs):
        order = shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            logits, cache = nncore.linear_forward(fused[batch], head_w, head_c)
            probs = nncore.softmax_rows(logits)
            loss, dlogits = nncore.cross_entropy(probs, labels[batch], train_config.class_weights)
            nncore.linear_backward(dlogits, cache)
            nncore.adam_step([head_w, head_c], adam)
            total += loss * len(batch)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise ModelError(f"baseline loss became non-finite at epoch {len(history) + 1}")
        history.append(epoch_loss)
    return TrainedBaseline(d=d, schema=schema, head_w=head_w, head_c=head_c, history=history)
