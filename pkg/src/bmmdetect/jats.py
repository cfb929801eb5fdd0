"""JATS/PMC full-text XML parsing and rule-based section-count extraction.

The extractor is a deterministic stand-in for remote language-model feature
mining: a versioned lexicon of method/statistics terms plus regex patterns
for reported statistical results. Corpora built from real model outputs can
still be ingested through the normal corpus format.
"""

from __future__ import annotations

import json
import random
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .corpus import LLMFeatures

SECTION_SYNONYMS_VERSION = 1

# Canonical section labels. JATS titles vary freely; anything not matching a
# synonym keeps its normalized title as the label.
_METHODS_SYNONYMS = {
    "methods",
    "method",
    "materials and methods",
    "material and methods",
    "materials & methods",
    "methods and materials",
    "experimental procedures",
    "experimental section",
    "patients and methods",
    "subjects and methods",
    "methodology",
}
_RESULTS_SYNONYMS = {
    "results",
    "result",
    "findings",
    "results and discussion",
}

# A numeric token is a maximal substring matching this pattern: an integer,
# optionally a decimal part, optionally a trailing percent sign. "10,000"
# therefore yields two tokens and "1.2.3" yields "1.2" and "3".
NUMERIC_TOKEN = re.compile(r"\d+(?:\.\d+)?%?")

_STOPWORDS = frozenset(
    "a an and are as at be by for from in into is it of on or that the their this to was were with".split()
)

_WORD = re.compile(r"[^\W_]+", re.UNICODE)


class JatsParseError(ValueError):
    """Raised for XML that cannot be parsed into a document."""


class LexiconError(ValueError):
    """Raised for lexicons violating their invariants."""


@dataclass(frozen=True)
class JatsDocument:
    """Structured view of one JATS article."""

    title: str
    year: int | None = None
    journal_name: str | None = None
    sections: dict[str, str] = field(default_factory=dict)
    fig_count_by_section: dict[str, int] = field(default_factory=dict)
    table_count_by_section: dict[str, int] = field(default_factory=dict)
    citation_count_by_section: dict[str, int] = field(default_factory=dict)
    keywords: tuple[str, ...] = ()


@dataclass(frozen=True)
class Lexicon:
    """Versioned term lists driving the deterministic count extractor."""

    method_terms: tuple[str, ...]
    statistical_terms: tuple[str, ...]
    statistical_result_patterns: tuple[str, ...]
    version: str = "builtin-1"

    def __post_init__(self):
        for name in ("method_terms", "statistical_terms", "statistical_result_patterns"):
            terms = getattr(self, name)
            if not terms:
                raise LexiconError(f"{name} must be nonempty")
            if len(set(terms)) != len(terms):
                raise LexiconError(f"{name} contains duplicates")
        for name in ("method_terms", "statistical_terms"):
            for term in getattr(self, name):
                if term != term.lower():
                    raise LexiconError(f"{name} entries must be lowercase: {term!r}")


DEFAULT_LEXICON = Lexicon(
    method_terms=(
        "pcr",
        "western blot",
        "elisa",
        "flow cytometry",
        "immunohistochemistry",
        "chromatography",
        "electrophoresis",
        "sequencing",
        "spectroscopy",
        "centrifugation",
        "cell culture",
        "staining",
        "microscopy",
        "titration",
        "randomization",
        "questionnaire",
    ),
    statistical_terms=(
        "t-test",
        "anova",
        "chi-square",
        "p-value",
        "regression",
        "confidence interval",
        "mann-whitney",
        "wilcoxon",
        "kruskal-wallis",
        "spearman",
        "pearson",
        "standard deviation",
        "odds ratio",
        "hazard ratio",
        "logistic",
    ),
    statistical_result_patterns=(
        r"\bp\s*[<>=≤≥]\s*\d*\.?\d+",
        r"\b\d{1,2}(?:\.\d+)?%\s*(?:ci\b|confidence interval)",
        r"\b(?:or|hr|rr)\s*=\s*\d+(?:\.\d+)?",
    ),
)


def load_lexicon(path) -> Lexicon:
    """Read a lexicon JSON file: the three term lists plus a version string."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        return Lexicon(
            method_terms=tuple(obj["method_terms"]),
            statistical_terms=tuple(obj["statistical_terms"]),
            statistical_result_patterns=tuple(obj["statistical_result_patterns"]),
            version=str(obj.get("version", "unversioned")),
        )
    except KeyError as exc:
        raise LexiconError(f"lexicon file missing key {exc}") from exc


def save_lexicon(lexicon: Lexicon, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "version": lexicon.version,
                "method_terms": list(lexicon.method_terms),
                "statistical_terms": list(lexicon.statistical_terms),
                "statistical_result_patterns": list(lexicon.statistical_result_patterns),
            },
            fh,
            indent=2,
        )
        fh.write("\n")


# ---------------------------------------------------------------------------
# XML parsing
# ---------------------------------------------------------------------------


def _local(tag) -> str:
    # strip any namespace: "{uri}sec" -> "sec"
    if isinstance(tag, str):
        return tag.rsplit("}", 1)[-1]
    return ""


def _text_of(element) -> str:
    return re.sub(r"\s+", " ", " ".join(element.itertext())).strip()


def normalize_section_title(title: str) -> str:
    """Lowercase, drop leading numbering, collapse whitespace, map synonyms."""
    t = title.lower().strip()
    t = re.sub(r"^[0-9ivxlc]+[.)]?\s+", "", t)
    t = re.sub(r"\s+", " ", t).strip(" .:")
    if t in _METHODS_SYNONYMS:
        return "methods"
    if t in _RESULTS_SYNONYMS:
        return "results"
    return t


def _find_first(root, tag: str):
    for el in root.iter():
        if _local(el.tag) == tag:
            return el
    return None


def parse_jats(data: bytes | str) -> JatsDocument:
    """Parse JATS XML bytes into a :class:`JatsDocument`.

    Top-level body sections are grouped under canonical labels; nested
    subsections fold into their top-level parent. Figure, table, and
    bibliographic citation elements are tallied per section.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise JatsParseError(f"not well-formed XML: {exc}") from exc
    if _local(root.tag) != "article":
        article = _find_first(root, "article")
        if article is None:
            raise JatsParseError("missing <article> root element")
        root = article

    title_el = _find_first(root, "article-title")
    if title_el is None or not _text_of(title_el):
        raise JatsParseError("missing article title")
    title = _text_of(title_el)

    years = []
    for el in root.iter():
        if _local(el.tag) == "pub-date":
            year_el = _find_first(el, "year")
            if year_el is not None and year_el.text and year_el.text.strip().isdigit():
                years.append(int(year_el.text.strip()))
    year = min(years) if years else None

    journal_el = _find_first(root, "journal-title")
    journal_name = _text_of(journal_el) if journal_el is not None else None

    sections: dict[str, str] = {}
    figs: dict[str, int] = {}
    tables: dict[str, int] = {}
    cites: dict[str, int] = {}
    body = _find_first(root, "body")
    if body is not None:
        for sec in body:
            if _local(sec.tag) != "sec":
                continue
            sec_title_el = None
            for child in sec:
                if _local(child.tag) == "title":
                    sec_title_el = child
                    break
            label = normalize_section_title(_text_of(sec_title_el)) if sec_title_el is not None else "untitled"
            if not label:
                label = "untitled"
            paragraphs = [_text_of(el) for el in sec.iter() if _local(el.tag) == "p"]
            text = " ".join(p for p in paragraphs if p)
            sections[label] = (sections[label] + " " + text).strip() if label in sections else text

            fig_n = sum(1 for el in sec.iter() if _local(el.tag) == "fig")
            table_n = sum(1 for el in sec.iter() if _local(el.tag) == "table-wrap")
            cite_n = sum(
                1
                for el in sec.iter()
                if _local(el.tag) == "xref" and el.get("ref-type") == "bibr"
            )
            figs[label] = figs.get(label, 0) + fig_n
            tables[label] = tables.get(label, 0) + table_n
            cites[label] = cites.get(label, 0) + cite_n

    keywords = tuple(
        _text_of(el) for el in root.iter() if _local(el.tag) == "kwd" and _text_of(el)
    )

    return JatsDocument(
        title=title,
        year=year,
        journal_name=journal_name,
        sections=sections,
        fig_count_by_section=figs,
        table_count_by_section=tables,
        citation_count_by_section=cites,
        keywords=keywords,
    )


# ---------------------------------------------------------------------------
# Count extraction
# ---------------------------------------------------------------------------


def _term_pattern(term: str) -> re.Pattern:
    # whole-word/phrase match: no alphanumeric directly before or after
    return re.compile(rf"(?<![0-9a-z]){re.escape(term)}(?![0-9a-z])")


def _distinct_terms(text: str, terms) -> int:
    return sum(1 for term in terms if _term_pattern(term).search(text))


def extract_counts(doc: JatsDocument, lexicon: Lexicon = DEFAULT_LEXICON) -> LLMFeatures:
    """Compute the six methods/results counts from a parsed document.

    Distinct-term counting is used for method_num and method_statistical (a
    term mentioned five times counts once). Absent sections yield zeros.
    """
    methods_text = doc.sections.get("methods", "").lower()
    results_text = doc.sections.get("results", "").lower()
    result_fig = doc.fig_count_by_section.get("results", 0) + doc.table_count_by_section.get("results", 0)
    result_statistical = sum(
        len(re.findall(pattern, results_text)) for pattern in lexicon.statistical_result_patterns
    )
    return LLMFeatures(
        method_num=_distinct_terms(methods_text, lexicon.method_terms),
        method_cite=doc.citation_count_by_section.get("methods", 0),
        method_statistical=_distinct_terms(methods_text, lexicon.statistical_terms),
        result_fig=result_fig,
        result_num=len(NUMERIC_TOKEN.findall(results_text)),
        result_statistical=result_statistical,
    )


def extract_keywords(doc: JatsDocument, n: int, seed: int = 0) -> list[str]:
    """Pick up to n keywords, deterministically for a given seed.

    Falls back to title tokens when the document has no keyword group:
    stopwords removed, ranked longest first with lexicographic ties.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if doc.keywords:
        pool = list(doc.keywords)
        if len(pool) <= n:
            return pool
        return random.Random(seed).sample(pool, n)
    tokens = [t.lower() for t in _WORD.findall(doc.title)]
    candidates = sorted(set(t for t in tokens if t not in _STOPWORDS), key=lambda t: (-len(t), t))
    return candidates[:n]
