"""Planted-signal synthetic corpora and the brute-force metric oracles.

Each record draws one hidden factor per channel (journal, llm, title). The
label comes from thresholding ``latent + noise`` where
latent = w_journal*z_j + w_llm*z_l + w_title*z_t, with exact class counts.
Every channel exposes its own factor through its features regardless of the
channel weights, so a zero-weight channel is pure label-independent noise.
The estimated Bayes AUC (true logits scored against the drawn labels) is an
upper-bound reference for any model trained on the exposed features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import (
    AffiliationInfo,
    JournalMetadata,
    LLMFeatures,
    PaperFlags,
    PaperRecord,
)
from .embed import hash_embed
from .evaluation import ConfusionCounts

JOURNAL_EXPOSABLE = ("sjr", "h_index", "quartile")

# base and scale for each llm count exposure
_LLM_COUNTS = (
    ("method_num", 6.0, 2.0),
    ("method_cite", 8.0, 3.0),
    ("method_statistical", 3.0, 1.5),
    ("result_fig", 4.0, 1.5),
    ("result_num", 40.0, 12.0),
    ("result_statistical", 5.0, 2.0),
)

_TITLE_VOCAB = (
    "analysis assay biomarker cohort detection effects evaluation expression "
    "factor fibrosis gene growth hepatic impact inhibition kinase levels liver "
    "marker mechanism model modulation murine novel outcomes pathway patients "
    "profile protein quantification rat receptor regulation response risk role "
    "serum signaling study synthesis therapy tissue treatment trial tumor "
    "validation variant activity binding clinical expression2 induced".split()
)

_JOURNAL_POOL = tuple(f"journal-{i:02d}" for i in range(30))
_COUNTRY_POOL = ("USA", "China", "Germany", "Japan", "Brazil", "India", "UK", "France")
_AREA_POOL = ("Oncology", "Pharmacology", "Neuroscience", "Cardiology", "Immunology", "Genetics")
_NATURE_POOL = ("university", "institute", "hospital", "company")
_INSTITUTION_POOL = tuple(f"institution-{i:02d}" for i in range(40))


class SynthError(ValueError):
    """Raised for invalid generator configurations."""


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for corpus generation; weights gate which factors drive labels."""

    n: int = 2000
    positive_ratio: float = 0.25
    journal_w: float = 1.0
    llm_w: float = 1.0
    title_w: float = 1.0
    noise_sd: float = 0.25
    d: int = 32
    seed: int = 0
    journal_features: tuple[str, ...] = JOURNAL_EXPOSABLE

    def __post_init__(self):
        if self.n < 8:
            raise SynthError(f"n must be >= 8, got {self.n}")
        if not 0.0 < self.positive_ratio < 1.0:
            raise SynthError(f"positive_ratio must be in (0, 1), got {self.positive_ratio}")
        if self.noise_sd < 0:
            raise SynthError("noise_sd must be >= 0")
        if self.d < 1:
            raise SynthError("d must be >= 1")
        for name in self.journal_features:
            if name not in JOURNAL_EXPOSABLE:
                raise SynthError(f"unknown journal exposure {name!r}")


@dataclass(frozen=True)
class SynthTruth:
    """Ground truth of one generated corpus."""

    coefficients: dict[str, float]
    logits: np.ndarray
    bayes_auc: float

    def to_json_dict(self) -> dict:
        return {
            "coefficients": dict(self.coefficients),
            "bayes_auc": self.bayes_auc,
            "logits": [float(v) for v in self.logits],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)
            fh.write("\n")


def _exposed(rng: np.random.Generator, factor: np.ndarray, noise_sd: float) -> np.ndarray:
    return factor + noise_sd * rng.standard_normal(factor.shape[0])


def generate(config: SynthConfig) -> tuple[list[PaperRecord], dict[str, np.ndarray], SynthTruth]:
    """Generate a corpus, its embedding map, and its ground truth.

    Deterministic per seed: one RNG with a fixed draw order. Labels hit the
    positive ratio exactly (rounded count).
    """
    rng = np.random.default_rng(config.seed)
    n = config.n

    direction = rng.standard_normal(config.d)
    direction /= np.linalg.norm(direction)
    factors = rng.standard_normal((n, 3))  # columns: journal, llm, title
    label_noise = config.noise_sd * rng.standard_normal(n)
    latent = (
        config.journal_w * factors[:, 0]
        + config.llm_w * factors[:, 1]
        + config.title_w * factors[:, 2]
    )
    n_pos = int(round(n * config.positive_ratio))
    ranking = np.argsort(-(latent + label_noise), kind="stable")
    labels = np.zeros(n, dtype=np.int64)
    labels[ranking[:n_pos]] = 1

    # journal channel drivers (unexposed features run on independent noise)
    def driver(exposed: bool, channel: int) -> np.ndarray:
        if exposed:
            return _exposed(rng, factors[:, channel], config.noise_sd)
        return rng.standard_normal(n)

    sjr_driver = driver("sjr" in config.journal_features, 0)
    h_driver = driver("h_index" in config.journal_features, 0)
    quartile_driver = driver("quartile" in config.journal_features, 0)
    sjr = np.maximum(0.0, 5.0 + 1.5 * sjr_driver)
    h_index = np.maximum(0.0, 40.0 + 10.0 * h_driver).round().astype(int)
    cuts = np.quantile(quartile_driver, [0.25, 0.5, 0.75])
    quartile_idx = np.digitize(quartile_driver, cuts)  # 3 = top band = Q1
    quartile = np.array(["Q4", "Q3", "Q2", "Q1"])[quartile_idx]

    llm_drivers = {name: driver(True, 1) for name, _, _ in _LLM_COUNTS}
    llm_counts = {
        name: np.maximum(0.0, base + scale * llm_drivers[name]).round().astype(int)
        for name, base, scale in _LLM_COUNTS
    }

    title_driver = _exposed(rng, factors[:, 2], config.noise_sd)

    journal_names = rng.choice(len(_JOURNAL_POOL), size=n, p=_zipf(len(_JOURNAL_POOL)))
    countries = rng.choice(len(_COUNTRY_POOL), size=n, p=_zipf(len(_COUNTRY_POOL)))
    areas = rng.choice(len(_AREA_POOL), size=n)
    years = rng.integers(2010, 2024, size=n)
    flags = rng.random((n, 4)) < np.array([0.3, 0.5, 0.3, 0.4])
    title_lengths = rng.integers(4, 9, size=n)
    title_words = rng.integers(0, len(_TITLE_VOCAB), size=(n, 8))
    aff_sizes = rng.integers(1, 5, size=n)
    aff_names = rng.integers(0, len(_INSTITUTION_POOL), size=(n, 4))
    aff_countries = rng.integers(0, len(_COUNTRY_POOL), size=(n, 4))
    aff_natures = rng.integers(0, len(_NATURE_POOL), size=(n, 4))

    records: list[PaperRecord] = []
    embeddings: dict[str, np.ndarray] = {}
    for i in range(n):
        rid = f"syn-{i:05d}"
        title = " ".join(_TITLE_VOCAB[w] for w in title_words[i, : title_lengths[i]])
        size = int(aff_sizes[i])
        records.append(
            PaperRecord(
                id=rid,
                title=title,
                year=int(years[i]),
                journal_name=_JOURNAL_POOL[journal_names[i]],
                label=int(labels[i]),
                llm=LLMFeatures(**{name: int(llm_counts[name][i]) for name, _, _ in _LLM_COUNTS}),
                journal=JournalMetadata(
                    sjr=float(sjr[i]),
                    h_index=int(h_index[i]),
                    quartile=str(quartile[i]),
                    country=_COUNTRY_POOL[countries[i]],
                    area=_AREA_POOL[areas[i]],
                ),
                flags=PaperFlags(*(bool(v) for v in flags[i])),
                affiliations=AffiliationInfo(
                    names=tuple(_INSTITUTION_POOL[j] for j in aff_names[i, :size]),
                    countries=tuple(_COUNTRY_POOL[j] for j in aff_countries[i, :size]),
                    areas=(_AREA_POOL[int(areas[i])],),
                    natures=tuple(_NATURE_POOL[j] for j in aff_natures[i, :size]),
                ),
            )
        )
        embeddings[rid] = hash_embed(title, config.d, seed=config.seed + 1) + title_driver[i] * direction

    bayes = oracle_auc(latent.tolist(), labels.tolist())
    truth = SynthTruth(
        coefficients={"journal": config.journal_w, "llm": config.llm_w, "title": config.title_w},
        logits=latent,
        bayes_auc=max(0.5, bayes),
    )
    return records, embeddings, truth


def _zipf(size: int) -> np.ndarray:
    weights = 1.0 / np.arange(1, size + 1)
    return weights / weights.sum()


# ---------------------------------------------------------------------------
# Brute-force oracles (kept free of numpy linalg and of the eval module's
# rank-based implementation)
# ---------------------------------------------------------------------------


def oracle_auc(scores, labels) -> float:
    """Literal double loop over all positive/negative pairs, ties credit 0.5."""
    pos = [float(s) for s, y in zip(scores, labels) if y == 1]
    neg = [float(s) for s, y in zip(scores, labels) if y == 0]
    if not pos or not neg:
        raise SynthError("oracle_auc needs both classes")
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def oracle_confusion(scores, labels, threshold: float) -> ConfusionCounts:
    """Literal per-record application of the >= threshold rule."""
    tp = fp = fn = tn = 0
    for s, y in zip(scores, labels):
        call = float(s) >= threshold
        if call and y == 1:
            tp += 1
        elif call:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)
