"""Corpus records, validation, and the journal feature encoding.

A corpus is a line-delimited JSON file, one paper per line. This module owns
the record format, turns raw metadata into the dense journal feature vector
(dummy variables for categoricals, z-scores for continuous values), and
provides the deterministic k-fold splitter used by cross-validation.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

QUARTILES = ("Q1", "Q2", "Q3", "Q4")
OTHER_TOKEN = "other"
MISSING_TOKEN = "missing"
SCHEMA_FORMAT_VERSION = 1

# Clamp for degenerate standard deviations so z-scoring stays total.
SD_FLOOR = 1e-9


class CorpusError(ValueError):
    """Raised for unusable corpora or invalid schema operations."""


@dataclass(frozen=True)
class LLMFeatures:
    """Six language-model-mined counts for the methods/results sections."""

    method_num: int
    method_cite: int
    method_statistical: int
    result_fig: int
    result_num: int
    result_statistical: int

    def as_tuple(self) -> tuple[int, ...]:
        return (
            self.method_num,
            self.method_cite,
            self.method_statistical,
            self.result_fig,
            self.result_num,
            self.result_statistical,
        )


@dataclass(frozen=True)
class JournalMetadata:
    """Journal-level metadata; every field may be unknown (None)."""

    sjr: float | None = None
    h_index: int | None = None
    quartile: str | None = None
    country: str | None = None
    area: str | None = None


@dataclass(frozen=True)
class PaperFlags:
    """Boolean study-type markers extracted from the paper."""

    is_clinical: bool = False
    human: bool = False
    animal: bool = False
    molecular_cellular: bool = False


@dataclass(frozen=True)
class AffiliationInfo:
    """Author affiliation lists (possibly empty)."""

    names: tuple[str, ...] = ()
    countries: tuple[str, ...] = ()
    areas: tuple[str, ...] = ()
    natures: tuple[str, ...] = ()


@dataclass(frozen=True)
class PaperRecord:
    """One article with its label and all raw features."""

    id: str
    title: str
    year: int
    journal_name: str
    label: int
    llm: LLMFeatures
    journal: JournalMetadata = JournalMetadata()
    flags: PaperFlags = PaperFlags()
    affiliations: AffiliationInfo = AffiliationInfo()


@dataclass(frozen=True)
class Diagnostic:
    """A per-line problem found while loading a corpus."""

    line: int
    record_id: str | None
    message: str


def validate_record(record: PaperRecord, *, current_year: int | None = None) -> list[str]:
    """Return invariant violations for ``record`` (empty list when valid)."""
    if current_year is None:
        current_year = datetime.date.today().year
    problems: list[str] = []
    if not record.id:
        problems.append("id must be nonempty")
    if record.label not in (0, 1):
        problems.append(f"label must be 0 or 1, got {record.label!r}")
    if not 1900 <= record.year <= current_year:
        problems.append(f"year {record.year} outside [1900, {current_year}]")
    for name, value in zip(
        ("method_num", "method_cite", "method_statistical", "result_fig", "result_num", "result_statistical"),
        record.llm.as_tuple(),
    ):
        if value < 0:
            problems.append(f"llm.{name} must be >= 0, got {value}")
    if record.journal.sjr is not None and record.journal.sjr < 0:
        problems.append(f"journal.sjr must be >= 0, got {record.journal.sjr}")
    if record.journal.h_index is not None and record.journal.h_index < 0:
        problems.append(f"journal.h_index must be >= 0, got {record.journal.h_index}")
    if record.journal.quartile is not None and record.journal.quartile not in QUARTILES:
        problems.append(f"journal.quartile must be one of {QUARTILES}, got {record.journal.quartile!r}")
    for list_name in ("names", "countries", "areas", "natures"):
        for item in getattr(record.affiliations, list_name):
            if not isinstance(item, str) or not item:
                problems.append(f"affiliations.{list_name} entries must be nonempty strings")
                break
    return problems


# ---------------------------------------------------------------------------
# JSONL (de)serialization
# ---------------------------------------------------------------------------

_TOP_KEYS = {"id", "title", "year", "journal_name", "label", "llm", "journal", "flags", "affiliations"}
_LLM_KEYS = ("method_num", "method_cite", "method_statistical", "result_fig", "result_num", "result_statistical")
_JOURNAL_KEYS = ("sjr", "h_index", "quartile", "country", "area")
_FLAG_KEYS = ("is_clinical", "human", "animal", "molecular_cellular")
_AFF_KEYS = ("names", "countries", "areas", "natures")


def _require_keys(obj: Mapping, keys: Iterable[str], where: str) -> None:
    if not isinstance(obj, Mapping):
        raise ValueError(f"{where} must be an object")
    expected = set(keys)
    got = set(obj)
    missing = expected - got
    extra = got - expected
    if missing:
        raise ValueError(f"{where} missing keys: {sorted(missing)}")
    if extra:
        raise ValueError(f"{where} has unknown keys: {sorted(extra)}")


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{where} must be an integer, got {value!r}")
    return value


def _as_str(value, where: str) -> str:
    if not isinstance(value, str):
        raise ValueError(f"{where} must be a string, got {value!r}")
    return value


def _as_str_list(value, where: str) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise ValueError(f"{where} must be a list of strings")
    for item in value:
        if not isinstance(item, str):
            raise ValueError(f"{where} must contain only strings")
    return tuple(value)


def record_from_dict(obj: Mapping) -> PaperRecord:
    """Build a PaperRecord from one parsed JSONL object (strict keys)."""
    _require_keys(obj, _TOP_KEYS, "record")
    _require_keys(obj["llm"], _LLM_KEYS, "llm")
    _require_keys(obj["journal"], _JOURNAL_KEYS, "journal")
    _require_keys(obj["flags"], _FLAG_KEYS, "flags")
    _require_keys(obj["affiliations"], _AFF_KEYS, "affiliations")

    journal = obj["journal"]
    sjr = journal["sjr"]
    if sjr is not None and (isinstance(sjr, bool) or not isinstance(sjr, (int, float))):
        raise ValueError(f"journal.sjr must be a number or null, got {sjr!r}")
    h_index = journal["h_index"]
    if h_index is not None:
        h_index = _as_int(h_index, "journal.h_index")
    for key in ("quartile", "country", "area"):
        if journal[key] is not None and not isinstance(journal[key], str):
            raise ValueError(f"journal.{key} must be a string or null")
    flags = obj["flags"]
    for key in _FLAG_KEYS:
        if not isinstance(flags[key], bool):
            raise ValueError(f"flags.{key} must be a boolean")

    return PaperRecord(
        id=_as_str(obj["id"], "id"),
        title=_as_str(obj["title"], "title"),
        year=_as_int(obj["year"], "year"),
        journal_name=_as_str(obj["journal_name"], "journal_name"),
        label=_as_int(obj["label"], "label"),
        llm=LLMFeatures(*(_as_int(obj["llm"][k], f"llm.{k}") for k in _LLM_KEYS)),
        journal=JournalMetadata(
            sjr=None if sjr is None else float(sjr),
            h_index=h_index,
            quartile=journal["quartile"],
            country=journal["country"],
            area=journal["area"],
        ),
        flags=PaperFlags(**{k: flags[k] for k in _FLAG_KEYS}),
        affiliations=AffiliationInfo(
            **{k: _as_str_list(obj["affiliations"][k], f"affiliations.{k}") for k in _AFF_KEYS}
        ),
    )


def record_to_dict(record: PaperRecord) -> dict:
    """Inverse of :func:`record_from_dict`, with a stable key order."""
    return {
        "id": record.id,
        "title": record.title,
        "year": record.year,
        "journal_name": record.journal_name,
        "label": record.label,
        "llm": {k: getattr(record.llm, k) for k in _LLM_KEYS},
        "journal": {k: getattr(record.journal, k) for k in _JOURNAL_KEYS},
        "flags": {k: getattr(record.flags, k) for k in _FLAG_KEYS},
        "affiliations": {k: list(getattr(record.affiliations, k)) for k in _AFF_KEYS},
    }


def load_corpus(path) -> tuple[list[PaperRecord], list[Diagnostic]]:
    """Read a JSONL corpus, validating every line.

    Malformed lines and invariant violations are collected as diagnostics
    rather than aborting the load; duplicate ids keep the first occurrence.
    Raises :class:`CorpusError` if the file is unreadable or no line yields
    a valid record.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    records: list[PaperRecord] = []
    seen: set[str] = set()
    diagnostics: list[Diagnostic] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            record = record_from_dict(obj)
        except (ValueError, TypeError) as exc:
            diagnostics.append(Diagnostic(line_no, None, f"malformed record: {exc}"))
            continue
        problems = validate_record(record)
        if problems:
            diagnostics.append(Diagnostic(line_no, record.id, "; ".join(problems)))
            continue
        if record.id in seen:
            diagnostics.append(Diagnostic(line_no, record.id, "duplicate id (first occurrence kept)"))
            continue
        seen.add(record.id)
        records.append(record)
    if not records:
        raise CorpusError(f"no valid records in {path} ({len(diagnostics)} diagnostics)")
    return records, diagnostics


def save_corpus(records: Sequence[PaperRecord], path) -> None:
    """Write records as one JSON object per line (stable key order)."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Raw feature registry
# ---------------------------------------------------------------------------

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
MODALITY_LLM = "llm"
MODALITY_FULLTEXT = "fulltext"
TABULAR_MODALITIES = (MODALITY_LLM, MODALITY_FULLTEXT)


@dataclass(frozen=True)
class RawFeature:
    """One raw feature: how to read it from a record and write it back.

    ``put`` exists so permutation importance can move raw values between
    records; for derived counts it synthesizes a minimal structure realizing
    the count without touching sibling features.
    """

    name: str
    kind: str
    modality: str
    missable: bool
    get: Callable[[PaperRecord], object]
    put: Callable[[PaperRecord, object], PaperRecord]


def _put_journal(field: str):
    def put(record: PaperRecord, value) -> PaperRecord:
        return dataclasses.replace(record, journal=dataclasses.replace(record.journal, **{field: value}))

    return put


def _put_flag(field: str):
    def put(record: PaperRecord, value) -> PaperRecord:
        return dataclasses.replace(record, flags=dataclasses.replace(record.flags, **{field: bool(round(value))}))

    return put


def _put_llm(field: str):
    def put(record: PaperRecord, value) -> PaperRecord:
        return dataclasses.replace(record, llm=dataclasses.replace(record.llm, **{field: int(round(value))}))

    return put


def _put_aff_list(field: str, prefix: str):
    def put(record: PaperRecord, value) -> PaperRecord:
        items = tuple(f"{prefix}{i}" for i in range(int(round(value))))
        return dataclasses.replace(
            record, affiliations=dataclasses.replace(record.affiliations, **{field: items})
        )

    return put


def _opt_float(value) -> float | None:
    return None if value is None else float(value)


RAW_FEATURES: tuple[RawFeature, ...] = (
    RawFeature("sjr", CONTINUOUS, MODALITY_FULLTEXT, True,
               lambda r: _opt_float(r.journal.sjr), _put_journal("sjr")),
    RawFeature("h_index", CONTINUOUS, MODALITY_FULLTEXT, True,
               lambda r: _opt_float(r.journal.h_index),
               lambda r, v: _put_journal("h_index")(r, None if v is None else int(round(v)))),
    RawFeature("quartile", CATEGORICAL, MODALITY_FULLTEXT, True,
               lambda r: r.journal.quartile, _put_journal("quartile")),
    RawFeature("country_journal", CATEGORICAL, MODALITY_FULLTEXT, True,
               lambda r: r.journal.country, _put_journal("country")),
    RawFeature("area_journal", CATEGORICAL, MODALITY_FULLTEXT, True,
               lambda r: r.journal.area, _put_journal("area")),
    RawFeature("journal_name", CATEGORICAL, MODALITY_FULLTEXT, False,
               lambda r: r.journal_name, lambda r, v: dataclasses.replace(r, journal_name=v)),
    RawFeature("year", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(r.year), lambda r, v: dataclasses.replace(r, year=int(round(v)))),
    RawFeature("is_clinical", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(r.flags.is_clinical), _put_flag("is_clinical")),
    RawFeature("human", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(r.flags.human), _put_flag("human")),
    RawFeature("animal", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(r.flags.animal), _put_flag("animal")),
    RawFeature("molecular_cellular", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(r.flags.molecular_cellular), _put_flag("molecular_cellular")),
    RawFeature("aff_count", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(len(r.affiliations.names)), _put_aff_list("names", "inst-")),
    RawFeature("aff_country_count", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(len(set(r.affiliations.countries))), _put_aff_list("countries", "country-")),
    RawFeature("aff_area_count", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(len(set(r.affiliations.areas))), _put_aff_list("areas", "area-")),
    RawFeature("aff_nature_count", CONTINUOUS, MODALITY_FULLTEXT, False,
               lambda r: float(len(set(r.affiliations.natures))), _put_aff_list("natures", "nature-")),
    RawFeature("method_num", CONTINUOUS, MODALITY_LLM, False,
               lambda r: float(r.llm.method_num), _put_llm("method_num")),
    RawFeature("method_cite", CONTINUOUS, MODALITY_LLM, False,
               lambda r: float(r.llm.method_cite), _put_llm("method_cite")),
    RawFeature("method_statistical", CONTINUOUS, MODALITY_LLM, False,
               lambda r: float(r.llm.method_statistical), _put_llm("method_statistical")),
    RawFeature("result_fig", CONTINUOUS, MODALITY_LLM, False,
               lambda r: float(r.llm.result_fig), _put_llm("result_fig")),
    RawFeature("result_num", CONTINUOUS, MODALITY_LLM, False,
               lambda r: float(r.llm.result_num), _put_llm("result_num")),
    RawFeature("result_statistical", CONTINUOUS, MODALITY_LLM, False,
               lambda r: float(r.llm.result_statistical), _put_llm("result_statistical")),
)

FEATURES_BY_NAME: dict[str, RawFeature] = {f.name: f for f in RAW_FEATURES}


# ---------------------------------------------------------------------------
# Feature schema: fit + encode
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FittedFeature:
    """A raw feature with its fitted statistics and column slice."""

    name: str
    kind: str
    modality: str
    missable: bool
    offset: int
    width: int
    mean: float | None = None
    sd: float | None = None
    vocabulary: tuple[str, ...] | None = None


@dataclass(frozen=True)
class FeatureSchema:
    """Deterministic record -> dense vector mapping, fitted on training data."""

    features: tuple[FittedFeature, ...]
    journal_dim: int
    top_k: int
    format_version: int = SCHEMA_FORMAT_VERSION

    def feature(self, name: str) -> FittedFeature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def continuous_features(self) -> tuple[FittedFeature, ...]:
        return tuple(f for f in self.features if f.kind == CONTINUOUS)

    def to_json_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "top_k": self.top_k,
            "journal_dim": self.journal_dim,
            "features": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    "modality": f.modality,
                    "missable": f.missable,
                    "offset": f.offset,
                    "width": f.width,
                    "mean": f.mean,
                    "sd": f.sd,
                    "vocabulary": None if f.vocabulary is None else list(f.vocabulary),
                }
                for f in self.features
            ],
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "FeatureSchema":
        if obj.get("format_version") != SCHEMA_FORMAT_VERSION:
            raise CorpusError(f"unsupported schema format_version {obj.get('format_version')!r}")
        features = tuple(
            FittedFeature(
                name=f["name"],
                kind=f["kind"],
                modality=f["modality"],
                missable=f["missable"],
                offset=f["offset"],
                width=f["width"],
                mean=f["mean"],
                sd=f["sd"],
                vocabulary=None if f["vocabulary"] is None else tuple(f["vocabulary"]),
            )
            for f in obj["features"]
        )
        return cls(features=features, journal_dim=obj["journal_dim"], top_k=obj["top_k"])


@dataclass(frozen=True)
class EncodedFeatures:
    """The dense journal vector for one record.

    ``vector`` already contains the missing-indicator columns; ``missing_mask``
    repeats them (one bit per missable continuous source feature, in schema
    order) for introspection.
    """

    vector: np.ndarray
    missing_mask: np.ndarray


def fit_schema(
    records: Sequence[PaperRecord],
    top_k: int = 50,
    modalities: Sequence[str] = TABULAR_MODALITIES,
) -> FeatureSchema:
    """Fit vocabularies and normalization statistics on ``records``.

    Vocabularies keep the ``top_k`` most frequent categories (ties broken
    lexicographically) plus the reserved "other" bucket; a null categorical
    counts as the token "missing". Continuous means/sds are computed over
    non-missing values only (population sd, clamped to ``SD_FLOOR``).
    """
    if not records:
        raise CorpusError("fit_schema requires at least one record")
    if top_k < 1:
        raise CorpusError(f"top_k must be >= 1, got {top_k}")
    modalities = tuple(modalities)
    for m in modalities:
        if m not in TABULAR_MODALITIES:
            raise CorpusError(f"unknown modality {m!r}")

    fitted: list[FittedFeature] = []
    offset = 0
    for raw in RAW_FEATURES:
        if raw.modality not in modalities:
            continue
        if raw.kind == CONTINUOUS:
            values = [raw.get(r) for r in records]
            present = np.array([v for v in values if v is not None], dtype=np.float64)
            if present.size:
                mean = float(present.mean())
                sd = max(float(present.std()), SD_FLOOR)
            else:
                mean, sd = 0.0, SD_FLOOR
            width = 2 if raw.missable else 1
            fitted.append(
                FittedFeature(raw.name, raw.kind, raw.modality, raw.missable, offset, width, mean=mean, sd=sd)
            )
        else:
            tokens = [raw.get(r) if raw.get(r) is not None else MISSING_TOKEN for r in records]
            counts = Counter(tokens)
            ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            vocab = tuple(token for token, _ in ordered[:top_k]) + (OTHER_TOKEN,)
            width = len(vocab)
            fitted.append(
                FittedFeature(raw.name, raw.kind, raw.modality, raw.missable, offset, width, vocabulary=vocab)
            )
        offset += fitted[-1].width
    return FeatureSchema(features=tuple(fitted), journal_dim=offset, top_k=top_k)


def encode(record: PaperRecord, schema: FeatureSchema) -> EncodedFeatures:
    """Encode one record into its dense journal vector (total, deterministic)."""
    vec = np.zeros(schema.journal_dim, dtype=np.float64)
    mask: list[float] = []
    for f in schema.features:
        raw = FEATURES_BY_NAME[f.name]
        value = raw.get(record)
        if f.kind == CONTINUOUS:
            if value is None:
                # z-column stays 0; indicator flips on
                if f.missable:
                    vec[f.offset + 1] = 1.0
                    mask.append(1.0)
            else:
                vec[f.offset] = (float(value) - f.mean) / f.sd
                if f.missable:
                    mask.append(0.0)
        else:
            token = value if value is not None else MISSING_TOKEN
            vocab = f.vocabulary
            try:
                idx = vocab.index(token)
            except ValueError:
                idx = len(vocab) - 1  # "other" is always last
            vec[f.offset + idx] = 1.0
    return EncodedFeatures(vector=vec, missing_mask=np.array(mask, dtype=np.float64))


def encode_matrix(records: Sequence[PaperRecord], schema: FeatureSchema) -> np.ndarray:
    """Stack encoded vectors into an (n, journal_dim) matrix in record order."""
    if schema.journal_dim == 0:
        return np.zeros((len(records), 0), dtype=np.float64)
    return np.stack([encode(r, schema).vector for r in records])


# ---------------------------------------------------------------------------
# Fold assignment
# ---------------------------------------------------------------------------


def split_folds(
    records: Sequence[PaperRecord],
    k: int,
    seed: int,
    stratified: bool = False,
) -> dict[str, int]:
    """Assign every record id to exactly one of k folds.

    Fold sizes differ by at most one. In stratified mode each class is dealt
    round-robin separately (extras continue where the previous class stopped),
    which preserves the class ratio per fold within one sample per class.
    """
    if k < 2:
        raise CorpusError(f"k must be >= 2, got {k}")
    if len(records) < k:
        raise CorpusError(f"k={k} exceeds record count {len(records)}")
    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    if not stratified:
        order = rng.permutation(len(records))
        for position, idx in enumerate(order):
            assignment[records[idx].id] = position % k
        return assignment
    offset = 0
    for cls in (0, 1):
        members = [i for i, r in enumerate(records) if r.label == cls]
        order = rng.permutation(len(members))
        for position, j in enumerate(order):
            assignment[records[members[j]].id] = (offset + position) % k
        offset = (offset + len(members)) % k
    return assignment
