"""Binary evaluation metrics and the cross-validation harness.

Metrics with a zero denominator are reported as None (never silently 0);
fold means and sample standard deviations are computed over defined folds
only, with the undefined count recorded per metric.
"""

from __future__ import annotations

import io
import json
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, replace

import numpy as np

from .corpus import FeatureSchema, PaperRecord, TABULAR_MODALITIES, fit_schema, split_folds
from .model import PredictionBatch, TrainConfig, fit_bmm, linear_baseline_train

METRIC_NAMES = ("precision", "recall", "specificity", "accuracy", "f1", "auc")
CV_REPORT_FORMAT_VERSION = 1


class EvaluationError(ValueError):
    """Raised for misaligned ids, infeasible folds, or bad score files."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    """One evaluation; undefined values (zero denominators) are None."""

    precision: float | None = None
    recall: float | None = None
    specificity: float | None = None
    accuracy: float | None = None
    f1: float | None = None
    auc: float | None = None

    def values(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _count_cells(ids, scores, labels: Mapping[str, int], threshold: float) -> ConfusionCounts:
    if not 0.0 < threshold < 1.0:
        raise EvaluationError(f"threshold must be in (0, 1), got {threshold}")
    if set(ids) != set(labels):
        raise EvaluationError("prediction ids do not match label ids")
    tp = fp = fn = tn = 0
    for rid, score in zip(ids, scores):
        call = score >= threshold
        truth = labels[rid] == 1
        if call and truth:
            tp += 1
        elif call:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def confusion(
    predictions: PredictionBatch,
    labels: Mapping[str, int],
    threshold: float = 0.5,
) -> ConfusionCounts:
    """Count the confusion cells; positive call iff p(positive) >= threshold."""
    return _count_cells(predictions.ids, predictions.positive, labels, threshold)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def metrics(counts: ConfusionCounts) -> MetricsReport:
    """Exact formula evaluation from the confusion cells (auc excluded)."""
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    specificity = _ratio(counts.tn, counts.fp + counts.tn)
    accuracy = _ratio(counts.tp + counts.tn, counts.total)
    if precision is None or recall is None or precision + recall == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return MetricsReport(precision=precision, recall=recall, specificity=specificity, accuracy=accuracy, f1=f1)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float | None:
    """Mann-Whitney AUC: fraction of pos/neg pairs ranked correctly, ties 0.5.

    Computed through average ranks, which gives exactly the same value as the
    literal pair count. Returns None when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # average rank for the tie group [i, j], 1-based
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(scores: Sequence[float], labels: Sequence[int]) -> float | None:
    """Area under the precision-recall curve (average precision form).

    Exposed alongside ROC-AUC because the two readings of "AUC" differ; the
    headline metric everywhere in this package is ROC-AUC.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    if n_pos == 0 or n_pos == len(labels):
        return None
    order = np.argsort(-scores, kind="stable")
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    precision = tp / np.arange(1, len(labels) + 1)
    recall = tp / n_pos
    previous_recall = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - previous_recall) * precision).sum())


def score_set(scores: Sequence[float], labels: Mapping[str, int], ids: Sequence[str], threshold=0.5) -> MetricsReport:
    """All six metrics for a score vector aligned with ``ids``."""
    batch_labels = [labels[rid] for rid in ids]
    report = metrics(_count_cells(ids, scores, {rid: labels[rid] for rid in ids}, threshold))
    return replace(report, auc=roc_auc(scores, batch_labels))


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CvSettings:
    """Everything one CV run needs beyond the data itself."""

    d: int = 32
    top_k: int = 50
    modalities: tuple[str, ...] = TABULAR_MODALITIES
    text_enabled: bool = True
    fusion_mode: str = "intra_plus_inter"
    scaled_attention: bool = False
    journal_hidden: int = 16
    batch_size: int = 32
    epochs: int = 30
    lr: float = 1e-2
    class_weights: tuple[float, float] = (1.0, 1.0)
    patience: int | None = None
    context_policy: str = "fixed_order"
    model: str = "bmm"  # or "baseline"

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.lr,
            class_weights=self.class_weights,
            seed=seed,
            patience=self.patience,
        )


@dataclass(frozen=True)
class CvReport:
    """Per-fold metrics with mean and sample sd over defined folds."""

    k: int
    seed: int
    stratified: bool
    folds: tuple[MetricsReport, ...]
    mean: MetricsReport
    sd: MetricsReport
    undefined_counts: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "format_version": CV_REPORT_FORMAT_VERSION,
            "k": self.k,
            "seed": self.seed,
            "stratified": self.stratified,
            "folds": [report.values() for report in self.folds],
            "mean": self.mean.values(),
            "sd": self.sd.values(),
            "undefined_counts": dict(self.undefined_counts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("row," + ",".join(METRIC_NAMES) + "\n")

        def fmt(report: MetricsReport) -> str:
            return ",".join("" if v is None else repr(v) for v in report.values().values())

        for i, report in enumerate(self.folds):
            out.write(f"fold{i},{fmt(report)}\n")
        out.write(f"mean,{fmt(self.mean)}\n")
        out.write(f"sd,{fmt(self.sd)}\n")
        return out.getvalue()


def summarize_folds(folds: Sequence[MetricsReport], k: int, seed: int, stratified: bool) -> CvReport:
    """Aggregate fold metrics into mean +- sample sd over defined values."""
    mean_values: dict[str, float | None] = {}
    sd_values: dict[str, float | None] = {}
    undefined: dict[str, int] = {}
    for name in METRIC_NAMES:
        defined = [report.values()[name] for report in folds if report.values()[name] is not None]
        undefined[name] = len(folds) - len(defined)
        if not defined:
            mean_values[name] = None
            sd_values[name] = None
        else:
            mean_values[name] = float(np.mean(defined))
            sd_values[name] = float(np.std(defined, ddof=1)) if len(defined) > 1 else 0.0
    return CvReport(
        k=k,
        seed=seed,
        stratified=stratified,
        folds=tuple(folds),
        mean=MetricsReport(**mean_values),
        sd=MetricsReport(**sd_values),
        undefined_counts=undefined,
    )


@dataclass
class FoldOutcome:
    fold: int
    schema: FeatureSchema
    report: MetricsReport
    predictions: PredictionBatch


TrainerFn = Callable[[Sequence[PaperRecord], FeatureSchema, Mapping | None, int], object]


def _default_trainer(settings: CvSettings) -> TrainerFn:
    def trainer(train_records, schema, embeddings, seed):
        if settings.model == "baseline":
            return linear_baseline_train(
                train_records,
                schema,
                embeddings,
                settings.train_config(seed * 2 + 1),
                d=settings.d if settings.text_enabled else 0,
                seed=seed,
            )
        return fit_bmm(
            train_records,
            schema,
            embeddings,
            d=settings.d,
            fusion_mode=settings.fusion_mode,
            scaled_attention=settings.scaled_attention,
            journal_hidden=settings.journal_hidden,
            text_enabled=settings.text_enabled,
            seed=seed,
            train_config=settings.train_config(seed * 2 + 1),
        )

    return trainer


def fold_seed(seed: int, fold: int) -> int:
    """Per-fold training seed: documented arithmetic, stable across runs."""
    return seed * 100003 + fold


def run_fold(
    records: Sequence[PaperRecord],
    fold_assignment: Mapping[str, int],
    fold: int,
    embeddings: Mapping[str, np.ndarray] | None,
    settings: CvSettings,
    seed: int,
    trainer: TrainerFn | None = None,
) -> FoldOutcome:
    """Fit schema and model on the training folds, score the held-out fold."""
    train_records = [r for r in records if fold_assignment[r.id] != fold]
    test_records = [r for r in records if fold_assignment[r.id] == fold]
    if not train_records or not test_records:
        raise EvaluationError(f"fold {fold} is empty")
    schema = fit_schema(train_records, top_k=settings.top_k, modalities=settings.modalities)
    trainer = trainer or _default_trainer(settings)
    trained = trainer(train_records, schema, embeddings, fold_seed(seed, fold))
    predictions = trained.predict(
        test_records, embeddings, context_policy=settings.context_policy, batch_size=settings.batch_size
    )
    labels = {r.id: r.label for r in test_records}
    report = metrics(confusion(predictions, labels))
    report = replace(report, auc=roc_auc(predictions.positive, [r.label for r in test_records]))
    return FoldOutcome(fold=fold, schema=schema, report=report, predictions=predictions)


def _fold_job(payload):
    records, folds, fold, embeddings, settings, seed = payload
    return run_fold(records, folds, fold, embeddings, settings, seed)


def run_cv(
    records: Sequence[PaperRecord],
    embeddings: Mapping[str, np.ndarray] | None,
    k: int = 5,
    seed: int = 0,
    stratified: bool = True,
    settings: CvSettings = CvSettings(),
    folds: Mapping[str, int] | None = None,
    trainer: TrainerFn | None = None,
    jobs: int = 1,
) -> CvReport:
    """k-fold cross-validation, deterministic per seed.

    Normalization statistics and vocabularies are fitted on the training
    folds only. Results are merged in fold order, so the report does not
    depend on execution order or on ``jobs`` (fold-level process parallelism,
    available for the default trainer only).
    """
    if folds is None:
        folds = split_folds(records, k=k, seed=seed, stratified=stratified)
    if jobs > 1 and trainer is None:
        import concurrent.futures

        payloads = [(records, folds, fold, embeddings, settings, seed) for fold in range(k)]
        try:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(_fold_job, payloads))
        except Exception as exc:
            raise EvaluationError(f"parallel cross-validation failed: {exc}") from exc
    else:
        outcomes = []
        for fold in range(k):
            try:
                outcomes.append(run_fold(records, folds, fold, embeddings, settings, seed, trainer))
            except Exception as exc:
                raise EvaluationError(f"fold {fold} failed: {exc}") from exc
    return summarize_folds([o.report for o in outcomes], k=k, seed=seed, stratified=stratified)


# ---------------------------------------------------------------------------
# External score files
# ---------------------------------------------------------------------------


def load_score_file(path) -> dict[str, float]:
    """Read a line-delimited ``id<TAB>score`` file."""
    scores: dict[str, float] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rid, value = line.rstrip("\n").split("\t", 1)
                    scores[rid] = float(value)
                except ValueError as exc:
                    raise EvaluationError(f"{path}:{line_no}: expected 'id<TAB>score'") from exc
    except OSError as exc:
        raise EvaluationError(f"cannot read score file {path}: {exc}") from exc
    return scores


def compare_external(scores_path, labels: Mapping[str, int], threshold: float = 0.5) -> MetricsReport:
    """Score externally produced predictions with the identical metric path."""
    scores = load_score_file(scores_path)
    missing = sorted(set(labels) - set(scores))
    if missing:
        raise EvaluationError(f"score file missing ids: {missing[:5]}")
    ids = sorted(labels)
    return score_set([scores[rid] for rid in ids], labels, ids, threshold)
