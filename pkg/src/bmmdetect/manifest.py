"""Run manifests: config hash, input hashes, and artifact hashes.

Every CLI command drops a ``manifest.json`` beside its artifacts so any
report can be traced to (and regenerated from) the exact configuration and
inputs that produced it.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

MANIFEST_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(out_dir, command: str, config: dict, seed: int, inputs: dict, outputs: list) -> Path:
    """Hash inputs and outputs and write the manifest; returns its path."""
    out_dir = Path(out_dir)
    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "command": command,
        "seed": seed,
        "config": config,
        "config_sha256": config_hash(config),
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)} for name, path in inputs.items()
        },
        "outputs": {Path(path).name: sha256_file(path) for path in outputs},
    }
    path = out_dir / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise ValueError(f"unsupported manifest format_version {manifest.get('format_version')!r}")
    return manifest


def verify_outputs(manifest: dict, out_dir) -> list[str]:
    """Return mismatch messages for artifacts that changed since the run."""
    problems = []
    for name, expected in manifest.get("outputs", {}).items():
        path = Path(out_dir) / name
        if not path.exists():
            problems.append(f"{name}: missing")
        elif sha256_file(path) != expected:
            problems.append(f"{name}: hash mismatch")
    return problems
