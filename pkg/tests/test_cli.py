"""CLI commands, config validation, manifests, and pipeline determinism."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from bmmdetect.cli import ConfigError, main, resolve_config
from bmmdetect.manifest import load_manifest, sha256_file, verify_outputs
from jats_golden import DATA_DIR


def run_cli(*argv) -> int:
    return main(list(argv))


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    code = run_cli("synth", "--out", str(out), "--seed", "3", "--set", "n=120", "--set", "d=8")
    assert code == 0
    return out


class TestResolveConfig:
    def test_defaults(self):
        config = resolve_config(None, [], None)
        assert config["k"] == 5
        assert config["provider"] == "hash"

    def test_file_plus_overrides(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"epochs": 7, "lr": 0.5}))
        config = resolve_config(str(path), ["epochs=9", "stratified=false"], seed=42)
        assert config["epochs"] == 9
        assert config["lr"] == 0.5
        assert config["stratified"] is False
        assert config["seed"] == 42

    def test_unknown_keys_listed_exhaustively(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"bogus": 1, "nonsense": 2}))
        with pytest.raises(ConfigError) as err:
            resolve_config(str(path), ["alsobad=3"], None)
        text = str(err.value)
        assert "bogus" in text and "nonsense" in text and "alsobad" in text

    def test_bad_value_reported(self):
        with pytest.raises(ConfigError, match="epochs"):
            resolve_config(None, ["epochs=abc"], None)


class TestCommands:
    def test_synth_writes_artifacts_and_manifest(self, synth_dir):
        assert (synth_dir / "corpus.jsonl").exists()
        assert (synth_dir / "embeddings.tsv").exists()
        assert (synth_dir / "truth.json").exists()
        manifest = load_manifest(synth_dir / "manifest.json")
        assert manifest["command"] == "synth"
        assert manifest["seed"] == 3
        assert verify_outputs(manifest, synth_dir) == []

    def test_cv_without_corpus_exits_1(self, tmp_path, capsys):
        code = run_cli("cv", "--out", str(tmp_path / "cv"))
        assert code == 1
        assert "corpus" in capsys.readouterr().err

    def test_unknown_config_key_exits_1(self, tmp_path, capsys):
        code = run_cli("synth", "--out", str(tmp_path / "s"), "--set", "bogus=1")
        assert code == 1
        assert "bogus" in capsys.readouterr().err

    def test_missing_input_file_exits_2(self, tmp_path, capsys):
        code = run_cli(
            "cv",
            "--out", str(tmp_path / "cv"),
            "--corpus", str(tmp_path / "absent.jsonl"),
            "--embeddings", str(tmp_path / "absent.tsv"),
        )
        assert code == 2

    def test_cv_pipeline(self, synth_dir, tmp_path):
        out = tmp_path / "cv"
        code = run_cli(
            "cv",
            "--corpus", str(synth_dir / "corpus.jsonl"),
            "--embeddings", str(synth_dir / "embeddings.tsv"),
            "--out", str(out),
            "--seed", "3",
            "--set", "d=8", "--set", "epochs=4", "--set", "k=4",
        )
        assert code == 0
        report = json.loads((out / "cv_report.json").read_text())
        assert len(report["folds"]) == 4
        assert (out / "cv_report.csv").exists()

    def test_ingest_normalizes_and_reports(self, synth_dir, tmp_path):
        out = tmp_path / "ingest"
        code = run_cli("ingest", "--corpus", str(synth_dir / "corpus.jsonl"), "--out", str(out))
        assert code == 0
        assert (out / "corpus.jsonl").read_bytes() == (synth_dir / "corpus.jsonl").read_bytes()
        assert json.loads((out / "diagnostics.json").read_text()) == []

    def test_embed_hash_provider(self, synth_dir, tmp_path):
        out = tmp_path / "embed"
        code = run_cli(
            "embed",
            "--corpus", str(synth_dir / "corpus.jsonl"),
            "--out", str(out),
            "--set", "d=8",
            "--seed", "3",
        )
        assert code == 0
        header = (out / "embeddings.tsv").read_text().splitlines()[0]
        assert header == "#dim=8"

    def test_extract_from_golden_xml(self, tmp_path):
        out = tmp_path / "extract"
        xmls = sorted(str(p) for p in DATA_DIR.glob("*.xml"))
        code = run_cli("extract", "--xml", *xmls, "--out", str(out), "--set", "label=1")
        assert code == 0
        lines = (out / "corpus.jsonl").read_text().strip().split("\n")
        assert len(lines) == 5
        first = json.loads(lines[0])
        assert first["label"] == 1
        assert first["llm"]["method_num"] >= 0

    def test_train_then_importance(self, synth_dir, tmp_path):
        train_out = tmp_path / "train"
        code = run_cli(
            "train",
            "--corpus", str(synth_dir / "corpus.jsonl"),
            "--embeddings", str(synth_dir / "embeddings.tsv"),
            "--out", str(train_out),
            "--seed", "3",
            "--set", "d=8", "--set", "epochs=4",
        )
        assert code == 0
        imp_out = tmp_path / "imp"
        code = run_cli(
            "importance",
            "--model", str(train_out / "model.json"),
            "--corpus", str(synth_dir / "corpus.jsonl"),
            "--embeddings", str(synth_dir / "embeddings.tsv"),
            "--out", str(imp_out),
            "--seed", "3",
            "--set", "d=8", "--set", "repeats=2",
        )
        assert code == 0
        report = json.loads((imp_out / "importance.json").read_text())
        assert report["repeats"] == 2
        assert report["entries"]

    def test_correlate(self, synth_dir, tmp_path):
        out = tmp_path / "corr"
        code = run_cli("correlate", "--corpus", str(synth_dir / "corpus.jsonl"), "--out", str(out))
        assert code == 0
        lines = (out / "correlation.csv").read_text().strip().split("\n")
        assert lines[0] == "feature,r_pb,r_b,n"

    def test_ablate_emits_one_report_per_mode(self, synth_dir, tmp_path):
        out = tmp_path / "ablate"
        code = run_cli(
            "ablate",
            "--corpus", str(synth_dir / "corpus.jsonl"),
            "--embeddings", str(synth_dir / "embeddings.tsv"),
            "--out", str(out),
            "--seed", "3",
            "--set", "d=8", "--set", "epochs=2", "--set", "k=4",
            "--set", 'modes=["llm","title"]',
        )
        assert code == 0
        assert (out / "ablation_llm.json").exists()
        assert (out / "ablation_title.json").exists()
        assert not (out / "ablation_fulltext.json").exists()

    def test_report_verifies_manifest(self, synth_dir, tmp_path):
        out = tmp_path / "report"
        code = run_cli("report", "--manifest", str(synth_dir / "manifest.json"), "--out", str(out))
        assert code == 0
        text = (out / "report.md").read_text()
        assert "artifacts verified: yes" in text

    def test_report_detects_tampering(self, synth_dir, tmp_path):
        (synth_dir / "truth.json").write_text("{}\n")
        out = tmp_path / "report"
        code = run_cli("report", "--manifest", str(synth_dir / "manifest.json"), "--out", str(out))
        assert code == 2


class TestDeterminism:
    def run_pipeline(self, root: Path) -> dict[str, str]:
        synth = root / "synth"
        assert run_cli("synth", "--out", str(synth), "--seed", "5", "--set", "n=100", "--set", "d=8") == 0
        cv = root / "cv"
        assert run_cli(
            "cv",
            "--corpus", str(synth / "corpus.jsonl"),
            "--embeddings", str(synth / "embeddings.tsv"),
            "--out", str(cv),
            "--seed", "5",
            "--set", "d=8", "--set", "epochs=3", "--set", "k=4",
        ) == 0
        return {
            "corpus": sha256_file(synth / "corpus.jsonl"),
            "embeddings": sha256_file(synth / "embeddings.tsv"),
            "truth": sha256_file(synth / "truth.json"),
            "cv_json": sha256_file(cv / "cv_report.json"),
            "cv_csv": sha256_file(cv / "cv_report.csv"),
        }

    def test_pipeline_twice_is_byte_identical(self, tmp_path):
        first = self.run_pipeline(tmp_path / "run1")
        second = self.run_pipeline(tmp_path / "run2")
        assert first == second

    def test_parallel_jobs_do_not_change_bytes(self, synth_dir, tmp_path):
        outs = []
        for jobs, name in ((1, "seq"), (2, "par")):
            out = tmp_path / name
            code = run_cli(
                "cv",
                "--corpus", str(synth_dir / "corpus.jsonl"),
                "--embeddings", str(synth_dir / "embeddings.tsv"),
                "--out", str(out),
                "--seed", "4",
                "--set", "d=8", "--set", "epochs=2", "--set", "k=4",
                "--set", f"jobs={jobs}",
            )
            assert code == 0
            outs.append((out / "cv_report.json").read_bytes())
        assert outs[0] == outs[1]
