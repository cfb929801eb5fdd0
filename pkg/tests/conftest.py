"""Shared test fixtures and record builders."""

from __future__ import annotations

import numpy as np
import pytest

from bmmdetect.corpus import (
    AffiliationInfo,
    JournalMetadata,
    LLMFeatures,
    PaperFlags,
    PaperRecord,
)


def make_record(
    id: str = "r1",
    title: str = "A study of liver fibrosis",
    year: int = 2015,
    journal_name: str = "J Test",
    label: int = 0,
    sjr: float | None = 1.0,
    h_index: int | None = 50,
    quartile: str | None = "Q1",
    country: str | None = "USA",
    area: str | None = "Oncology",
    llm: tuple[int, int, int, int, int, int] = (3, 5, 2, 4, 20, 3),
    is_clinical: bool = False,
    human: bool = True,
    animal: bool = False,
    molecular_cellular: bool = False,
    names: tuple[str, ...] = ("Inst A",),
    countries: tuple[str, ...] = ("USA",),
    areas: tuple[str, ...] = ("Medicine",),
    natures: tuple[str, ...] = ("university",),
) -> PaperRecord:
    return PaperRecord(
        id=id,
        title=title,
        year=year,
        journal_name=journal_name,
        label=label,
        llm=LLMFeatures(*llm),
        journal=JournalMetadata(sjr=sjr, h_index=h_index, quartile=quartile, country=country, area=area),
        flags=PaperFlags(
            is_clinical=is_clinical, human=human, animal=animal, molecular_cellular=molecular_cellular
        ),
        affiliations=AffiliationInfo(names=names, countries=countries, areas=areas, natures=natures),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
