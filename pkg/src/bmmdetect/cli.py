"""Command-line surface: reproducible jobs over the corpus/model pipeline.

Commands: ingest | extract | embed | synth | train | cv | ablate |
importance | correlate | report. Every command takes a single JSON config
file plus flat dotted ``--set key=value`` overrides, a ``--seed``, and an
``--out`` directory, and writes a manifest with config and artifact hashes.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, evaluation, manifest
from .corpus import (
    AffiliationInfo,
    JournalMetadata,
    PaperFlags,
    PaperRecord,
    fit_schema,
    load_corpus,
    save_corpus,
)
from .embed import EmbedConfig, EmbeddingRequest, embed_titles, load_embedding_file, save_embedding_file
from .jats import DEFAULT_LEXICON, extract_counts, load_lexicon, parse_jats
from .model import TrainConfig, TrainedBmm, fit_bmm
from .synth import SynthConfig, generate


class ConfigError(ValueError):
    """Raised with the full list of validation problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _bool(value):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "false"):
        return value.lower() == "true"
    raise ValueError(f"expected a boolean, got {value!r}")


def _opt_int(value):
    if value is None or value == "null":
        return None
    return int(value)


def _str_list(value):
    if isinstance(value, list):
        return [str(v) for v in value]
    if isinstance(value, str):
        return [part for part in value.split(",") if part]
    raise ValueError(f"expected a list, got {value!r}")


# key -> (coercion, default)
CONFIG_SPEC = {
    "seed": (int, 0),
    "d": (int, 32),
    "top_k": (int, 50),
    "k": (int, 5),
    "stratified": (_bool, True),
    "batch_size": (int, 32),
    "epochs": (int, 30),
    "lr": (float, 1e-2),
    "fusion_mode": (str, "intra_plus_inter"),
    "scaled_attention": (_bool, False),
    "journal_hidden": (int, 16),
    "context_policy": (str, "fixed_order"),
    "class_weight_neg": (float, 1.0),
    "class_weight_pos": (float, 1.0),
    "patience": (_opt_int, None),
    "model": (str, "bmm"),
    "repeats": (int, 10),
    "provider": (str, "hash"),
    "embed_source": (lambda v: None if v in (None, "null") else str(v), None),
    "n": (int, 2000),
    "positive_ratio": (float, 0.25),
    "journal_w": (float, 1.0),
    "llm_w": (float, 1.0),
    "title_w": (float, 1.0),
    "noise_sd": (float, 0.25),
    "modes": (_str_list, ["llm", "title", "fulltext", "llm+title", "llm+fulltext", "title+fulltext", "llm+title+fulltext"]),
    "label": (int, 0),
    "jobs": (int, 1),
}


def resolve_config(config_path: str | None, overrides: list[str], seed: int | None) -> dict:
    """Merge file, overrides, and --seed; reject unknown keys exhaustively."""
    problems: list[str] = []
    raw: dict = {}
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
            if not isinstance(raw, dict):
                problems.append("config file must hold a JSON object")
                raw = {}
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read config {config_path}: {exc}"]) from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            problems.append(f"override {item!r} must look like key=value")
            continue
        try:
            raw[key] = json.loads(value)
        except json.JSONDecodeError:
            raw[key] = value
    for key in sorted(raw):
        if key not in CONFIG_SPEC:
            problems.append(f"unknown config key {key!r}")
    resolved = {}
    for key, (coerce, default) in CONFIG_SPEC.items():
        if key in raw:
            try:
                resolved[key] = coerce(raw[key])
            except (TypeError, ValueError) as exc:
                problems.append(f"bad value for {key!r}: {exc}")
        else:
            resolved[key] = default
    if seed is not None:
        resolved["seed"] = seed
    if problems:
        raise ConfigError(problems)
    return resolved


def _require(args_value, key: str, problems: list[str]):
    if not args_value:
        problems.append(f"missing required input: {key}")


def cv_settings(config: dict, modalities=("llm", "fulltext"), text_enabled=True) -> evaluation.CvSettings:
    return evaluation.CvSettings(
        d=config["d"],
        top_k=config["top_k"],
        modalities=tuple(modalities),
        text_enabled=text_enabled,
        fusion_mode=config["fusion_mode"],
        scaled_attention=config["scaled_attention"],
        journal_hidden=config["journal_hidden"],
        batch_size=config["batch_size"],
        epochs=config["epochs"],
        lr=config["lr"],
        class_weights=(config["class_weight_neg"], config["class_weight_pos"]),
        patience=config["patience"],
        context_policy=config["context_policy"],
        model=config["model"],
    )


def _load_inputs(args, config, problems):
    corpus_path = getattr(args, "corpus", None)
    _require(corpus_path, "corpus", problems)
    emb_path = getattr(args, "embeddings", None)
    _require(emb_path, "embeddings", problems)
    if problems:
        raise ConfigError(problems)
    records, _ = load_corpus(corpus_path)
    embeddings = load_embedding_file(emb_path, config["d"])
    return records, embeddings, {"corpus": corpus_path, "embeddings": emb_path}


def _write(out_dir: Path, name: str, text: str) -> Path:
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(args, config, out_dir: Path):
    problems: list[str] = []
    _require(args.corpus, "corpus", problems)
    if problems:
        raise ConfigError(problems)
    records, diagnostics = load_corpus(args.corpus)
    corpus_out = out_dir / "corpus.jsonl"
    save_corpus(records, corpus_out)
    diag_out = _write(
        out_dir,
        "diagnostics.json",
        json.dumps(
            [{"line": d.line, "record_id": d.record_id, "message": d.message} for d in diagnostics],
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    return {"corpus": args.corpus}, [corpus_out, diag_out]


def cmd_extract(args, config, out_dir: Path):
    problems: list[str] = []
    if not args.xml:
        problems.append("missing required input: xml (one or more JATS files)")
    if problems:
        raise ConfigError(problems)
    lexicon = load_lexicon(args.lexicon) if args.lexicon else DEFAULT_LEXICON
    records = []
    for i, path in enumerate(sorted(args.xml)):
        doc = parse_jats(Path(path).read_bytes())
        counts = extract_counts(doc, lexicon)
        records.append(
            PaperRecord(
                id=f"xml-{i:05d}",
                title=doc.title,
                year=doc.year if doc.year is not None else 1900,
                journal_name=doc.journal_name or "",
                label=config["label"],
                llm=counts,
                journal=JournalMetadata(),
                flags=PaperFlags(),
                affiliations=AffiliationInfo(),
            )
        )
    corpus_out = out_dir / "corpus.jsonl"
    save_corpus(records, corpus_out)
    inputs = {f"xml{i}": path for i, path in enumerate(sorted(args.xml))}
    if args.lexicon:
        inputs["lexicon"] = args.lexicon
    return inputs, [corpus_out]


def cmd_embed(args, config, out_dir: Path):
    problems: list[str] = []
    _require(args.corpus, "corpus", problems)
    if config["provider"] in ("file", "sidecar") and not config["embed_source"]:
        problems.append("missing required config: embed_source (for file/sidecar providers)")
    if problems:
        raise ConfigError(problems)
    records, _ = load_corpus(args.corpus)
    requests = [EmbeddingRequest(r.id, r.title) for r in records]
    embed_config = EmbedConfig(
        d=config["d"], provider=config["provider"], seed=config["seed"], source=config["embed_source"]
    )
    table = embed_titles(requests, embed_config)
    dim = len(next(iter(table.values()))) if table else config["d"]
    emb_out = out_dir / "embeddings.tsv"
    save_embedding_file(table, emb_out, dim)
    inputs = {"corpus": args.corpus}
    if config["provider"] == "file":
        inputs["embed_source"] = config["embed_source"]
    return inputs, [emb_out]


def cmd_synth(args, config, out_dir: Path):
    synth_config = SynthConfig(
        n=config["n"],
        positive_ratio=config["positive_ratio"],
        journal_w=config["journal_w"],
        llm_w=config["llm_w"],
        title_w=config["title_w"],
        noise_sd=config["noise_sd"],
        d=config["d"],
        seed=config["seed"],
    )
    records, embeddings, truth = generate(synth_config)
    corpus_out = out_dir / "corpus.jsonl"
    save_corpus(records, corpus_out)
    emb_out = out_dir / "embeddings.tsv"
    save_embedding_file(embeddings, emb_out, synth_config.d)
    truth_out = out_dir / "truth.json"
    truth.save(truth_out)
    return {}, [corpus_out, emb_out, truth_out]


def cmd_train(args, config, out_dir: Path):
    records, embeddings, inputs = _load_inputs(args, config, [])
    schema = fit_schema(records, top_k=config["top_k"])
    trained = fit_bmm(
        records,
        schema,
        embeddings,
        d=config["d"],
        fusion_mode=config["fusion_mode"],
        scaled_attention=config["scaled_attention"],
        journal_hidden=config["journal_hidden"],
        seed=config["seed"],
        train_config=TrainConfig(
            batch_size=config["batch_size"],
            epochs=config["epochs"],
            lr=config["lr"],
            class_weights=(config["class_weight_neg"], config["class_weight_pos"]),
            seed=config["seed"] * 2 + 1,
            patience=config["patience"],
        ),
    )
    model_out = out_dir / "model.json"
    trained.save(model_out)
    history_out = _write(
        out_dir, "history.json", json.dumps({"loss": trained.history}, sort_keys=True) + "\n"
    )
    return inputs, [model_out, history_out]


def cmd_cv(args, config, out_dir: Path):
    records, embeddings, inputs = _load_inputs(args, config, [])
    report = evaluation.run_cv(
        records,
        embeddings,
        k=config["k"],
        seed=config["seed"],
        stratified=config["stratified"],
        settings=cv_settings(config),
        jobs=config["jobs"],
    )
    json_out = _write(out_dir, "cv_report.json", report.to_json())
    csv_out = _write(out_dir, "cv_report.csv", report.to_csv())
    return inputs, [json_out, csv_out]


def cmd_ablate(args, config, out_dir: Path):
    records, embeddings, inputs = _load_inputs(args, config, [])
    problems = []
    specs = []
    for name in config["modes"]:
        parts = frozenset(name.split("+"))
        if not parts or parts - set(analysis.MODALITIES):
            problems.append(f"bad ablation mode {name!r}")
        else:
            specs.append(parts)
    if problems:
        raise ConfigError(problems)
    reports = analysis.run_ablation(
        records,
        embeddings,
        specs,
        k=config["k"],
        seed=config["seed"],
        stratified=config["stratified"],
        settings=cv_settings(config),
        jobs=config["jobs"],
    )
    outputs = []
    for name, report in reports.items():
        outputs.append(_write(out_dir, f"ablation_{name}.json", report.to_json()))
        outputs.append(_write(out_dir, f"ablation_{name}.csv", report.to_csv()))
    return inputs, outputs


def cmd_importance(args, config, out_dir: Path):
    problems: list[str] = []
    _require(args.model, "model", problems)
    records, embeddings, inputs = _load_inputs(args, config, problems)
    trained = TrainedBmm.load(args.model)
    inputs["model"] = args.model
    report = analysis.permutation_importance(
        trained, records, embeddings, repeats=config["repeats"], seed=config["seed"]
    )
    json_out = _write(out_dir, "importance.json", report.to_json())
    csv_out = _write(out_dir, "importance.csv", report.to_csv())
    return inputs, [json_out, csv_out]


def cmd_correlate(args, config, out_dir: Path):
    problems: list[str] = []
    _require(args.corpus, "corpus", problems)
    if problems:
        raise ConfigError(problems)
    records, _ = load_corpus(args.corpus)
    schema = fit_schema(records, top_k=config["top_k"])
    report = analysis.correlate_corpus(records, schema)
    json_out = _write(out_dir, "correlation.json", report.to_json())
    csv_out = _write(out_dir, "correlation.csv", report.to_csv())
    return {"corpus": args.corpus}, [json_out, csv_out]


def cmd_report(args, config, out_dir: Path):
    problems: list[str] = []
    _require(args.manifest, "manifest", problems)
    if problems:
        raise ConfigError(problems)
    run = manifest.load_manifest(args.manifest)
    run_dir = Path(args.manifest).parent
    mismatches = manifest.verify_outputs(run, run_dir)
    lines = [
        f"# Run report: {run['command']}",
        "",
        f"- seed: {run['seed']}",
        f"- config sha256: {run['config_sha256']}",
        f"- artifacts verified: {'yes' if not mismatches else 'NO'}",
    ]
    for problem in mismatches:
        lines.append(f"  - {problem}")
    lines.append("")
    lines.append("## Artifacts")
    for name, digest in sorted(run["outputs"].items()):
        lines.append(f"- {name}: {digest}")
    cv_path = run_dir / "cv_report.json"
    if cv_path.exists() and "cv_report.json" in run["outputs"]:
        cv = json.loads(cv_path.read_text())
        lines.append("")
        lines.append("## Cross-validation means")
        for metric, value in sorted(cv["mean"].items()):
            shown = "undefined" if value is None else f"{value:.4f}"
            lines.append(f"- {metric}: {shown}")
    report_out = _write(out_dir, "report.md", "\n".join(lines) + "\n")
    if mismatches:
        raise RuntimeError("manifest verification failed: " + "; ".join(mismatches))
    return {"manifest": args.manifest}, [report_out]


COMMANDS = {
    "ingest": cmd_ingest,
    "extract": cmd_extract,
    "embed": cmd_embed,
    "synth": cmd_synth,
    "train": cmd_train,
    "cv": cmd_cv,
    "ablate": cmd_ablate,
    "importance": cmd_importance,
    "correlate": cmd_correlate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmmdetect", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out", required=True, help="output directory")
        if name in ("ingest", "embed", "cv", "ablate", "train", "importance", "correlate"):
            cmd.add_argument("--corpus")
        if name in ("cv", "ablate", "train", "importance"):
            cmd.add_argument("--embeddings")
        if name == "importance":
            cmd.add_argument("--model")
        if name == "extract":
            cmd.add_argument("--xml", nargs="*", default=[])
            cmd.add_argument("--lexicon")
        if name == "report":
            cmd.add_argument("--manifest")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args.config, args.overrides, args.seed)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        inputs, outputs = COMMANDS[args.command](args, config, out_dir)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest.write_manifest(out_dir, args.command, config, config["seed"], inputs, outputs)
    print(f"{args.command}: wrote {len(outputs)} artifact(s) to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
