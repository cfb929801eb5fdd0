"""Acceptance suite: one test per criterion, one pass/fail line each.

Run with ``pytest -v tests/test_acceptance.py`` to see the per-criterion
lines. Every tolerance is pinned here; nothing is deferred to calibration.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np

from bmmdetect import analysis, nncore
from bmmdetect import model as model_mod
from bmmdetect.cli import main as cli_main
from bmmdetect.corpus import fit_schema, split_folds
from bmmdetect.embed import hash_embed
from bmmdetect.evaluation import CvSettings, confusion, roc_auc, run_cv, run_fold
from bmmdetect.manifest import sha256_file
from bmmdetect.model import BmmConfig, PredictionBatch, TrainConfig, fit_bmm, init_params
from bmmdetect.synth import SynthConfig, generate, oracle_auc, oracle_confusion
from conftest import make_record
from jats_golden import DATA_DIR, GOLDEN_CASES


def note(criterion: int, text: str) -> None:
    print(f"[criterion {criterion:02d}] PASS - {text}")


# ---------------------------------------------------------------------------
# 1. Gradient correctness
# ---------------------------------------------------------------------------


def test_c01_gradient_correctness():
    started = time.monotonic()
    seeds = range(10)

    for seed in seeds:
        rng = np.random.default_rng(seed)
        s, d = int(rng.integers(2, 6)), int(rng.integers(2, 9))

        # linear block
        x = rng.standard_normal((s, d))
        g = rng.standard_normal((s, d))

        def linear_loss(w_values):
            w = nncore.ParamBlock.of("w", w_values)
            b = nncore.ParamBlock.of("b", np.zeros((1, d)))
            out, cache = nncore.linear_forward(x, w, b)
            nncore.linear_backward(g, cache)
            return float((out * g).sum()), w.grad

        assert nncore.grad_check(linear_loss, rng.standard_normal((d, d)), eps=1e-5) <= 1e-6

        # relu + linear composition
        def relu_linear_loss(w_values):
            w = nncore.ParamBlock.of("w", w_values)
            out, lin_cache = nncore.linear_forward(x, w)
            act, relu_cache = nncore.relu(out)
            grad_out = nncore.relu_backward(g, relu_cache)
            nncore.linear_backward(grad_out, lin_cache)
            return float((act * g).sum()), w.grad

        w0 = rng.standard_normal((d, d))
        out0 = x @ w0
        if np.any(np.abs(out0) < 1e-3):  # keep clear of relu kinks
            w0 = w0 + 0.1
        assert nncore.grad_check(relu_linear_loss, w0, eps=1e-5) <= 1e-6

        # softmax + cross-entropy w.r.t. logits
        labels = rng.integers(0, 2, size=s)
        if labels.sum() == 0:
            labels[0] = 1

        def ce_loss(logits):
            probs = nncore.softmax_rows(logits)
            return nncore.cross_entropy(probs, labels)

        assert nncore.grad_check(ce_loss, rng.standard_normal((s, 2)), eps=1e-5) <= 1e-6

        # attention block, every weight matrix
        b0 = rng.standard_normal((s, d))
        base = {name: rng.standard_normal((d, d)) for name in ("w_q", "w_k", "w_v")}
        for which in ("w_q", "w_k", "w_v"):

            def attn_loss(x_values, which=which):
                values = dict(base)
                values[which] = x_values
                blocks = {name: nncore.ParamBlock.of(name, values[name]) for name in values}
                out, cache = nncore.attention_forward(b0, blocks["w_q"], blocks["w_k"], blocks["w_v"])
                nncore.attention_backward(g, cache)
                return float((out * g).sum()), blocks[which].grad

            assert nncore.grad_check(attn_loss, base[which].copy(), eps=1e-5) <= 1e-5

        # full composed model, all parameters at once
        config = BmmConfig(d=d, journal_dim=3, journal_hidden=2, seed=seed)
        params = init_params(config)
        blocks = params.blocks()
        enc = rng.standard_normal((s, 3))
        sizes = [p.value.size for p in blocks]
        offsets = np.cumsum([0] + sizes)

        def full_loss(flat_row):
            flat = flat_row.ravel()
            for p, start, size in zip(blocks, offsets, sizes):
                p.value[...] = flat[start : start + size].reshape(p.value.shape)
                p.zero_grad()
            probs, cache = model_mod.forward_batch(enc, b0, params, config)
            value, dlogits = nncore.cross_entropy(probs, labels)
            model_mod.backward_batch(dlogits, cache, config)
            return value, np.concatenate([p.grad.ravel() for p in blocks]).reshape(1, -1)

        x0 = np.concatenate([p.value.ravel() for p in blocks]).reshape(1, -1)
        assert nncore.grad_check(full_loss, x0, eps=1e-5) <= 1e-5

    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"gradient suite took {elapsed:.1f}s"
    note(1, f"gradient checks pass on 10 seeds in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Attention identities
# ---------------------------------------------------------------------------


def test_c02_attention_identities():
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        d = int(rng.integers(2, 9))
        w_q = nncore.ParamBlock.of("w_q", rng.standard_normal((d, d)))
        w_k = nncore.ParamBlock.of("w_k", rng.standard_normal((d, d)))
        w_v = nncore.ParamBlock.of("w_v", rng.standard_normal((d, d)))

        single = rng.standard_normal((1, d))
        out, _ = nncore.attention_forward(single, w_q, w_k, w_v)
        np.testing.assert_array_equal(out, single @ w_v.value)

        s = int(rng.integers(2, 6))
        batch = rng.standard_normal((s, d))
        base, _ = nncore.attention_forward(batch, w_q, w_k, w_v)
        perm = rng.permutation(s)
        permuted, _ = nncore.attention_forward(batch[perm], w_q, w_k, w_v)
        np.testing.assert_allclose(permuted, base[perm], atol=1e-10, rtol=0)

        row = rng.standard_normal(d)
        twins = np.stack([row, row])
        twin_out, _ = nncore.attention_forward(twins, w_q, w_k, w_v)
        np.testing.assert_allclose(twin_out[0], twin_out[1], atol=1e-12, rtol=0)
    note(2, "s=1 exactness, permutation equivariance, twin-row identity")


# ---------------------------------------------------------------------------
# 3. Metric oracles
# ---------------------------------------------------------------------------


def test_c03_metric_oracles():
    rng = np.random.default_rng(7)
    ids = tuple(f"r{i}" for i in range(8))
    for _ in range(20):
        scores = rng.random(8)
        batch = PredictionBatch(ids=ids, probs=np.column_stack([1 - scores, scores]))
        for bits in itertools.product((0, 1), repeat=8):
            expected = oracle_confusion(scores, bits, 0.5)
            got = confusion(batch, dict(zip(ids, bits)), 0.5)
            assert got == expected

    for case in range(500):
        rng_case = np.random.default_rng(1000 + case)
        n = int(rng_case.integers(4, 40))
        labels = rng_case.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0], labels[1] = 1, 0
        scores = np.round(rng_case.random(n), 1)  # coarse grid forces ties
        assert abs(roc_auc(scores, labels) - oracle_auc(scores, labels)) <= 1e-12
    note(3, "confusion exact on 2^8 x 20 labelings; AUC within 1e-12 on 500 cases")


# ---------------------------------------------------------------------------
# 4. CV integrity
# ---------------------------------------------------------------------------


def test_c04_cv_integrity():
    rng = np.random.default_rng(3)
    records = []
    for i in range(200):
        label = 1 if i < 50 else 0
        records.append(
            make_record(id=f"r{i:03d}", label=label, sjr=float(rng.uniform(0, 5)),
                        quartile=("Q1", "Q2", "Q3", "Q4")[int(rng.integers(0, 4))])
        )
    folds = split_folds(records, k=5, seed=11, stratified=True)

    assert set(folds) == {r.id for r in records}
    sizes = Counter(folds.values())
    assert set(sizes) == set(range(5))
    assert max(sizes.values()) - min(sizes.values()) <= 1

    pos = Counter(folds[r.id] for r in records if r.label == 1)
    neg = Counter(folds[r.id] for r in records if r.label == 0)
    assert max(pos.values()) - min(pos.values()) <= 1
    assert max(neg.values()) - min(neg.values()) <= 1

    embeddings = {r.id: hash_embed(r.id, 8, seed=2) for r in records}
    settings = CvSettings(d=8, epochs=1)
    outcome = run_fold(records, folds, 0, embeddings, settings, seed=11)
    perturbed = [
        dataclasses.replace(r, journal=dataclasses.replace(r.journal, sjr=1234.5))
        if folds[r.id] == 0
        else r
        for r in records
    ]
    outcome2 = run_fold(perturbed, folds, 0, embeddings, settings, seed=11)
    assert outcome.schema == outcome2.schema
    note(4, "partition, 1:3 stratification within +-1, no test-fold leakage")


# ---------------------------------------------------------------------------
# 5. Planted-signal learning
# ---------------------------------------------------------------------------


def test_c05_planted_signal_learning():
    started = time.monotonic()
    records, embeddings, truth = generate(SynthConfig(n=2000, positive_ratio=0.25, seed=7))
    assert sum(r.label for r in records) == 500
    report = run_cv(records, embeddings, k=5, seed=7, settings=CvSettings(d=32, epochs=30, lr=0.01))
    elapsed = time.monotonic() - started
    assert report.mean.auc >= 0.85, f"mean CV AUC {report.mean.auc:.4f} < 0.85"
    assert report.mean.auc <= truth.bayes_auc + 0.03
    assert elapsed <= 120.0, f"took {elapsed:.1f}s"
    note(5, f"mean CV AUC {report.mean.auc:.4f} (bayes {truth.bayes_auc:.4f}) in {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 6. Ablation channel isolation
# ---------------------------------------------------------------------------


def test_c06_ablation_channel_isolation():
    settings = CvSettings(d=16, epochs=25, lr=0.01)
    channel_modes = {
        "journal": (frozenset(("fulltext",)), frozenset(("llm", "title"))),
        "llm": (frozenset(("llm",)), frozenset(("title", "fulltext"))),
        "title": (frozenset(("title",)), frozenset(("llm", "fulltext"))),
    }
    for channel, (include_mode, exclude_mode) in channel_modes.items():
        weights = {"journal_w": 0.0, "llm_w": 0.0, "title_w": 0.0}
        weights[f"{channel}_w"] = 1.0
        records, embeddings, truth = generate(SynthConfig(n=1200, seed=21, d=16, **weights))
        reports = analysis.run_ablation(
            records, embeddings, [include_mode, exclude_mode], k=5, seed=21, settings=settings
        )
        included = reports[analysis.mode_name(include_mode)].mean.auc
        excluded = reports[analysis.mode_name(exclude_mode)].mean.auc
        assert included >= truth.bayes_auc - 0.1, f"{channel}: included {included:.4f}"
        assert 0.45 <= excluded <= 0.58, f"{channel}: excluded {excluded:.4f}"

    # full mode reproduces the main pipeline bitwise under equal seeds
    records, embeddings, _ = generate(SynthConfig(n=240, seed=22, d=16))
    fast = CvSettings(d=16, epochs=5, lr=0.01)
    ablated = analysis.run_ablation(
        records, embeddings, [frozenset(("llm", "title", "fulltext"))], k=5, seed=22, settings=fast
    )
    main_report = run_cv(records, embeddings, k=5, seed=22, settings=fast)
    assert ablated["llm+title+fulltext"].to_json() == main_report.to_json()
    note(6, "per-channel inclusion/exclusion bands hold; full mode bitwise-identical")


# ---------------------------------------------------------------------------
# 7. Permutation importance
# ---------------------------------------------------------------------------


class _SjrReader:
    def __init__(self, schema):
        self.schema = schema

    def positive_scores(self, records, embeddings, context_policy="singleton", batch_size=32):
        return np.array([1.0 / (1.0 + math.exp(-(r.journal.sjr or 0.0))) for r in records])


def test_c07_permutation_importance():
    records, embeddings, _ = generate(
        SynthConfig(n=400, seed=31, d=16, journal_w=1.5, llm_w=0.0, title_w=0.0, journal_features=("sjr",))
    )
    schema = fit_schema(records, top_k=10)

    # a model that provably ignores everything except sjr
    stub = _SjrReader(schema)
    stub_report = analysis.permutation_importance(
        stub, records, embeddings, repeats=5, seed=1, groups=["h_index", "method_num", "year"]
    )
    for entry in stub_report.entries:
        assert entry.mean == 0.0
        assert entry.sd == 0.0

    # identity self-check is executed per run and must be exactly 0; it
    # raises AnalysisError otherwise, so reaching here means it returned 0
    trained = fit_bmm(
        records, schema, embeddings, d=16, journal_hidden=8, seed=31,
        train_config=TrainConfig(epochs=20, lr=0.01, seed=31),
    )
    wins = 0
    for seed in range(10):
        report = analysis.permutation_importance(trained, records, embeddings, repeats=3, seed=seed)
        by_name = {e.feature: e.mean for e in report.entries}
        planted = by_name.pop("sjr")
        if planted > max(by_name.values()):
            wins += 1
    assert wins >= 9, f"planted feature won only {wins}/10 runs"
    note(7, f"ignored-feature importance exactly 0; planted feature outranks noise {wins}/10")


# ---------------------------------------------------------------------------
# 8. Correlation correctness
# ---------------------------------------------------------------------------


def test_c08_correlation_correctness():
    rng = np.random.default_rng(17)
    for _ in range(100):
        n = int(rng.integers(10, 60))
        values = rng.standard_normal(n)
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0], labels[1] = 1, 0
        r = analysis.point_biserial(values, labels)
        y = labels.astype(np.float64)
        num = float(((values - values.mean()) * (y - y.mean())).sum())
        den = math.sqrt(float(((values - values.mean()) ** 2).sum()) * float(((y - y.mean()) ** 2).sum()))
        assert abs(r - num / den) <= 1e-12

    values = [3.0, 1.0, 2.5, 0.5]
    labels = [1, 0, 1, 0]
    ratio = analysis.biserial(values, labels) / analysis.point_biserial(values, labels)
    phi_zero = 1.0 / math.sqrt(2.0 * math.pi)
    assert abs(ratio - 0.5 / phi_zero) <= 1e-9

    assert analysis.point_biserial([2.0, 2.0, 0.0, 0.0], [1, 1, 0, 0]) == 1.0
    note(8, "point-biserial == Pearson(0/1) to 1e-12; p=0.5 ratio and separation exact")


# ---------------------------------------------------------------------------
# 9. JATS golden files
# ---------------------------------------------------------------------------


def test_c09_jats_golden_files():
    from bmmdetect.corpus import LLMFeatures
    from bmmdetect.jats import DEFAULT_LEXICON, extract_counts, parse_jats

    assert len(GOLDEN_CASES) >= 5
    for name, doc_exp, counts in GOLDEN_CASES:
        doc = parse_jats((DATA_DIR / name).read_bytes())
        assert doc.title == doc_exp["title"], name
        assert doc.year == doc_exp["year"], name
        assert set(doc.sections) == doc_exp["section_labels"], name
        assert extract_counts(doc, DEFAULT_LEXICON) == LLMFeatures(**counts), name
    note(9, f"{len(GOLDEN_CASES)} golden documents reproduce titles, years, sections, counts")


# ---------------------------------------------------------------------------
# 10. Pipeline determinism (sidecar-free)
# ---------------------------------------------------------------------------


def _run_pipeline(root: Path) -> dict[str, str]:
    def run(*argv):
        assert cli_main(list(argv)) == 0, f"command failed: {argv}"

    synth = root / "synth"
    run("synth", "--out", str(synth), "--seed", "9", "--set", "n=200", "--set", "d=8")
    corpus = str(synth / "corpus.jsonl")
    embeddings = str(synth / "embeddings.tsv")
    fast = ["--set", "d=8", "--set", "epochs=3", "--set", "k=4"]

    # both sidecar-free providers: hash re-embeds titles, file re-emits
    embed_hash = root / "embed_hash"
    run("embed", "--corpus", corpus, "--out", str(embed_hash), "--seed", "9", "--set", "d=8")
    embed_file = root / "embed_file"
    run(
        "embed", "--corpus", corpus, "--out", str(embed_file), "--seed", "9", "--set", "d=8",
        "--set", "provider=file", "--set", f"embed_source={embeddings}",
    )

    cv = root / "cv"
    run("cv", "--corpus", corpus, "--embeddings", embeddings, "--out", str(cv), "--seed", "9", *fast)
    ablate = root / "ablate"
    run(
        "ablate", "--corpus", corpus, "--embeddings", embeddings, "--out", str(ablate), "--seed", "9",
        *fast, "--set", 'modes=["llm","title+fulltext"]',
    )
    train = root / "train"
    run("train", "--corpus", corpus, "--embeddings", embeddings, "--out", str(train), "--seed", "9", *fast)
    importance = root / "importance"
    run(
        "importance", "--model", str(train / "model.json"), "--corpus", corpus,
        "--embeddings", embeddings, "--out", str(importance), "--seed", "9", *fast,
        "--set", "repeats=2",
    )
    correlate = root / "correlate"
    run("correlate", "--corpus", corpus, "--out", str(correlate), "--seed", "9")

    reports = {}
    for directory, names in (
        (synth, ("corpus.jsonl", "embeddings.tsv", "truth.json")),
        (embed_hash, ("embeddings.tsv",)),
        (embed_file, ("embeddings.tsv",)),
        (cv, ("cv_report.json", "cv_report.csv")),
        (ablate, ("ablation_llm.json", "ablation_title+fulltext.json")),
        (train, ("model.json", "history.json")),
        (importance, ("importance.json", "importance.csv")),
        (correlate, ("correlation.json", "correlation.csv")),
    ):
        for name in names:
            reports[f"{directory.name}/{name}"] = sha256_file(directory / name)
    return reports


def test_c10_pipeline_determinism(tmp_path):
    first = _run_pipeline(tmp_path / "run1")
    second = _run_pipeline(tmp_path / "run2")
    assert first == second
    # hash provider was used throughout: no sidecar process exists here
    note(10, f"{len(first)} report files byte-identical across two seeded runs, no sidecar")
