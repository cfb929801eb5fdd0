"""Golden expectations for the handcrafted JATS files.

Every value below was computed by hand from the XML source: section labels by
applying the synonym table, the six counts by reading the text against the
builtin lexicon, figure/table/citation tallies by counting elements.
"""

from pathlib import Path

DATA_DIR = Path(__file__).parent / "data" / "jats"

# (filename, expected document fields, expected six counts)
GOLDEN_CASES = [
    (
        "g1_minimal.xml",
        {
            "title": "Benchmark document with a title only",
            "year": None,
            "journal_name": None,
            "section_labels": set(),
        },
        {
            "method_num": 0,
            "method_cite": 0,
            "method_statistical": 0,
            "result_fig": 0,
            "result_num": 0,
            "result_statistical": 0,
        },
    ),
    (
        "g2_methods_synonym.xml",
        {
            "title": "Protein quantification in murine liver",
            "year": 2019,
            "journal_name": "Journal of Careful Testing",
            "section_labels": {"methods"},
        },
        {
            # western blot, elisa
            "method_num": 2,
            "method_cite": 2,
            # t-test, anova
            "method_statistical": 2,
            "result_fig": 0,
            "result_num": 0,
            "result_statistical": 0,
        },
    ),
    (
        "g3_results_counts.xml",
        {
            "title": "Figure and table tallies",
            "year": 2021,
            "journal_name": None,
            "section_labels": {"results"},
        },
        {
            "method_num": 0,
            "method_cite": 0,
            "method_statistical": 0,
            # 2 figs + 1 table
            "result_fig": 3,
            # 45.5%, 32%, 0.05, 0.01
            "result_num": 4,
            # p < 0.05, p = 0.01
            "result_statistical": 2,
        },
    ),
    (
        "g4_nested_keywords.xml",
        {
            "title": "Nested sections and keywords",
            "year": 2018,
            "journal_name": None,
            "section_labels": {"methods", "results"},
            "keywords": ("fibrosis", "biomarkers", "spectroscopy", "liver"),
        },
        {
            # cell culture
            "method_num": 1,
            "method_cite": 1,
            # regression, mann-whitney (nested Statistics folds into methods)
            "method_statistical": 2,
            "result_fig": 1,
            # 12, 30, 40%
            "result_num": 3,
            "result_statistical": 0,
        },
    ),
    (
        "g5_full_counts.xml",
        {
            "title": "A randomized evaluation of staining protocols",
            "year": 2022,
            "journal_name": "Annals of Synthetic Examples",
            "section_labels": {"introduction", "methods", "results", "discussion"},
        },
        {
            # pcr, sequencing, staining, flow cytometry (twice -> once)
            "method_num": 4,
            "method_cite": 3,
            # regression, chi-square, wilcoxon, logistic
            "method_statistical": 4,
            # 1 fig + 1 table
            "result_fig": 2,
            # 120, 80, 0.001, 2.5, 95%, 1.2, 4.1, 5 (xref text)
            "result_num": 8,
            # p < 0.001; 95% confidence interval; or = 2.5
            "result_statistical": 3,
        },
    ),
]
