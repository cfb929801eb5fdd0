"""Feature-modality ablation, permutation importance, and label correlations.

Permutation importance shuffles one raw feature across the evaluation
records (all dummy columns of a categorical move together because the raw
value moves), rescores under the singleton context policy so batch attention
cannot leak a permuted value between records, and reports the ROC-AUC drop.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .corpus import FEATURES_BY_NAME, FeatureSchema, PaperRecord, split_folds
from .evaluation import CvReport, CvSettings, roc_auc, run_cv

MODALITIES = ("llm", "title", "fulltext")

_NORMAL = NormalDist()


class AnalysisError(ValueError):
    """Raised for degenerate inputs or internal consistency failures."""


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------


def mode_name(mode) -> str:
    parts = [m for m in MODALITIES if m in mode]
    if not parts or set(mode) - set(MODALITIES):
        raise AnalysisError(f"mode must be a nonempty subset of {MODALITIES}, got {set(mode)}")
    return "+".join(parts)


def all_modes() -> list[frozenset[str]]:
    """The seven nonempty modality subsets, full mode last."""
    modes = []
    for mask in range(1, 8):
        mode = frozenset(m for i, m in enumerate(MODALITIES) if mask & (1 << i))
        modes.append(mode)
    modes.sort(key=lambda m: (len(m), mode_name(m)))
    return modes


def settings_for_mode(mode, settings: CvSettings) -> CvSettings:
    """Structural exclusion: drop schema modalities and/or the text path."""
    name = mode_name(mode)  # validates
    del name
    modalities = tuple(m for m in ("llm", "fulltext") if m in mode)
    return dataclasses.replace(settings, modalities=modalities, text_enabled="title" in mode)


def run_ablation(
    records: Sequence[PaperRecord],
    embeddings: Mapping[str, np.ndarray] | None,
    specs: Sequence[frozenset[str]],
    k: int = 5,
    seed: int = 0,
    stratified: bool = True,
    settings: CvSettings = CvSettings(),
    jobs: int = 1,
) -> dict[str, CvReport]:
    """One CvReport per mode, all sharing the same fold assignment and seed."""
    if not specs:
        raise AnalysisError("ablation needs at least one mode")
    folds = split_folds(records, k=k, seed=seed, stratified=stratified)
    reports: dict[str, CvReport] = {}
    for mode in sorted(specs, key=mode_name):
        reports[mode_name(mode)] = run_cv(
            records,
            embeddings,
            k=k,
            seed=seed,
            stratified=stratified,
            settings=settings_for_mode(mode, settings),
            folds=folds,
            jobs=jobs,
        )
    return reports


# ---------------------------------------------------------------------------
# Permutation importance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImportanceEntry:
    feature: str
    mean: float
    sd: float


@dataclass(frozen=True)
class ImportanceReport:
    metric: str
    repeats: int
    seed: int
    baseline: float
    entries: tuple[ImportanceEntry, ...]

    def to_json_dict(self) -> dict:
        return {
            "metric": self.metric,
            "repeats": self.repeats,
            "seed": self.seed,
            "baseline": self.baseline,
            "entries": [{"feature": e.feature, "mean": e.mean, "sd": e.sd} for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("feature,mean,sd\n")
        for e in self.entries:
            out.write(f"{e.feature},{e.mean!r},{e.sd!r}\n")
        return out.getvalue()


def _permute_feature(records: Sequence[PaperRecord], name: str, perm: np.ndarray) -> list[PaperRecord]:
    raw = FEATURES_BY_NAME[name]
    values = [raw.get(r) for r in records]
    return [raw.put(r, values[perm[i]]) for i, r in enumerate(records)]


def permutation_importance(
    model,
    records: Sequence[PaperRecord],
    embeddings: Mapping[str, np.ndarray] | None,
    repeats: int = 10,
    seed: int = 0,
    groups: Sequence[str] | None = None,
) -> ImportanceReport:
    """Mean +- sd ROC-AUC degradation per raw feature group.

    ``model`` must expose ``schema`` and
    ``positive_scores(records, embeddings, context_policy=...)``. A
    self-check with the identity permutation runs first and must yield a
    drop of exactly 0.
    """
    if repeats < 1:
        raise AnalysisError("repeats must be >= 1")
    labels = [r.label for r in records]
    if len(set(labels)) < 2:
        raise AnalysisError("evaluation records must contain both classes")
    baseline = roc_auc(model.positive_scores(records, embeddings, context_policy="singleton"), labels)

    if groups is None:
        groups = model.schema.feature_names()
    unknown = [g for g in groups if g not in FEATURES_BY_NAME]
    if unknown:
        raise AnalysisError(f"unknown feature groups: {unknown}")

    n = len(records)
    # identity-permutation self-check: route every group through the same
    # value-moving machinery with the identity map; the drop must be exactly 0
    identity = np.arange(n)
    unchanged = list(records)
    for group in groups:
        unchanged = _permute_feature(unchanged, group, identity)
    identity_auc = roc_auc(model.positive_scores(unchanged, embeddings, context_policy="singleton"), labels)
    if baseline - identity_auc != 0.0:
        raise AnalysisError("identity-permutation self-check failed: drop is not exactly 0")
    entries = []
    for gi, group in enumerate(groups):
        drops = []
        for r in range(repeats):
            rng = np.random.default_rng([seed, gi, r])
            permuted = _permute_feature(records, group, rng.permutation(n))
            scores = model.positive_scores(permuted, embeddings, context_policy="singleton")
            drops.append(baseline - roc_auc(scores, labels))
        mean = float(np.mean(drops))
        sd = float(np.std(drops, ddof=1)) if repeats > 1 else 0.0
        entries.append(ImportanceEntry(feature=group, mean=mean, sd=sd))
    return ImportanceReport(
        metric="roc_auc", repeats=repeats, seed=seed, baseline=float(baseline), entries=tuple(entries)
    )


# ---------------------------------------------------------------------------
# Biserial correlations
# ---------------------------------------------------------------------------


def point_biserial(values: Sequence[float], labels: Sequence[int]) -> float | None:
    """r_pb = ((M1 - M0) / sigma_y) * sqrt(p * q), population sigma.

    Identical to the Pearson correlation with the 0/1 label encoding.
    Returns None for degenerate inputs (single class or constant values).
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(values)
    if n == 0 or len(labels) != n:
        raise AnalysisError("values and labels must be nonempty and aligned")
    n_pos = int((labels == 1).sum())
    if n_pos == 0 or n_pos == n:
        return None
    sigma = float(values.std())
    if sigma == 0.0:
        return None
    p = n_pos / n
    q = 1.0 - p
    m1 = float(values[labels == 1].mean())
    m0 = float(values[labels == 0].mean())
    return (m1 - m0) / sigma * math.sqrt(p * q)


def biserial(values: Sequence[float], labels: Sequence[int]) -> float | None:
    """r_b = ((M1 - M0) / sigma_y) * (p * q / phi(z)), z the normal quantile at q.

    Equivalently r_pb * sqrt(p*q) / phi(z). Assumes the binary label
    thresholds a latent normal variable; the coefficient can exceed 1 in
    magnitude when that assumption fails.
    """
    r_pb = point_biserial(values, labels)
    if r_pb is None:
        return None
    labels = np.asarray(labels, dtype=np.int64)
    p = float((labels == 1).mean())
    q = 1.0 - p
    density = _NORMAL.pdf(_NORMAL.inv_cdf(q))
    return r_pb * math.sqrt(p * q) / density


@dataclass(frozen=True)
class CorrelationEntry:
    feature: str
    r_pb: float | None
    r_b: float | None
    n: int


@dataclass(frozen=True)
class CorrelationReport:
    entries: tuple[CorrelationEntry, ...]

    def to_json_dict(self) -> dict:
        return {
            "entries": [
                {"feature": e.feature, "r_pb": e.r_pb, "r_b": e.r_b, "n": e.n} for e in self.entries
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("feature,r_pb,r_b,n\n")
        for e in self.entries:
            r_pb = "" if e.r_pb is None else repr(e.r_pb)
            r_b = "" if e.r_b is None else repr(e.r_b)
            out.write(f"{e.feature},{r_pb},{r_b},{e.n}\n")
        return out.getvalue()


def correlate_corpus(records: Sequence[PaperRecord], schema: FeatureSchema) -> CorrelationReport:
    """Both coefficients for every continuous feature against the label.

    Missing values are excluded pairwise (the retained count is reported);
    entries are sorted by |r_b| descending, undefined last, ties by name.
    """
    labels_all = [r.label for r in records]
    if labels_all.count(1) < 2 or labels_all.count(0) < 2:
        raise AnalysisError("correlation needs at least two records per class")
    continuous = schema.continuous_features()
    if not continuous:
        raise AnalysisError("schema has no continuous features")
    entries = []
    for f in continuous:
        raw = FEATURES_BY_NAME[f.name]
        pairs = [(raw.get(r), r.label) for r in records if raw.get(r) is not None]
        values = [v for v, _ in pairs]
        labels = [y for _, y in pairs]
        r_pb = point_biserial(values, labels) if values else None
        r_b = biserial(values, labels) if values else None
        entries.append(CorrelationEntry(feature=f.name, r_pb=r_pb, r_b=r_b, n=len(values)))
    entries.sort(key=lambda e: (e.r_b is None, -abs(e.r_b) if e.r_b is not None else 0.0, e.feature))
    return CorrelationReport(entries=tuple(entries))
