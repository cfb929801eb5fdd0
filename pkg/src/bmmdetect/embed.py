"""Title embedding providers.

The intra-sample title vector is treated as opaque by the rest of the
pipeline, so it can come from a precomputed file, from the deterministic
hashing embedder below, or from an external encoder process speaking the
line protocol (the sidecar).

Embedding file format: first line ``#dim=<d>``, then one row per title,
``id<TAB>v1,v2,...,vd`` with decimal reals.
"""

from __future__ import annotations

import hashlib
import json
import re
import shlex
import socket
import subprocess
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

DEFAULT_DIM = 768

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


class EmbedError(ValueError):
    """Raised for provider failures: missing ids, bad files, bad dimensions."""


class SidecarProtocolError(EmbedError):
    """Raised when the sidecar process violates the wire protocol."""


@dataclass(frozen=True)
class EmbeddingRequest:
    id: str
    title: str

    def __post_init__(self):
        if not self.id:
            raise EmbedError("embedding request id must be nonempty")


@dataclass(frozen=True)
class EmbedConfig:
    """Provider selection plus the knobs shared by all providers."""

    d: int = DEFAULT_DIM
    provider: str = "hash"
    seed: int = 0
    source: str | None = None

    def __post_init__(self):
        if self.d < 1:
            raise EmbedError(f"embedding size must be >= 1, got {self.d}")
        if self.provider not in ("hash", "file", "sidecar"):
            raise EmbedError(f"unknown provider {self.provider!r}")


def _token_slot(token: str, d: int, seed: int) -> tuple[int, float]:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=9, key=key).digest()
    index = int.from_bytes(digest[:8], "big") % d
    sign = 1.0 if digest[8] & 1 else -1.0
    return index, sign


def hash_embed(title: str, d: int, seed: int = 0) -> np.ndarray:
    """Deterministic signed bag-of-tokens embedding, L2-normalized.

    Lowercases, splits on non-alphanumeric runs, hashes each token to an
    index and a sign, accumulates, and normalizes. An empty token set gives
    the zero vector. Token order never matters.
    """
    if d < 1:
        raise EmbedError(f"embedding size must be >= 1, got {d}")
    vec = np.zeros(d, dtype=np.float64)
    for token in _TOKEN.findall(title.lower()):
        index, sign = _token_slot(token, d, seed)
        vec[index] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def load_embedding_file(path, d: int | None = None) -> dict[str, np.ndarray]:
    """Read an embedding file; any malformed or mismatched row is fatal."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise EmbedError(f"cannot read embedding file {path}: {exc}") from exc
    if not lines or not lines[0].startswith("#dim="):
        raise EmbedError(f"{path}: first line must be a '#dim=<d>' header")
    try:
        file_dim = int(lines[0][len("#dim=") :])
    except ValueError as exc:
        raise EmbedError(f"{path}: bad dimension header {lines[0]!r}") from exc
    if d is not None and d != file_dim:
        raise EmbedError(f"{path}: header dim={file_dim} does not match requested d={d}")

    out: dict[str, np.ndarray] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rid, values = line.split("\t", 1)
        except ValueError as exc:
            raise EmbedError(f"{path}:{line_no}: expected 'id<TAB>values'") from exc
        if rid in out:
            raise EmbedError(f"{path}:{line_no}: duplicate id {rid!r}")
        vec = np.array([float(v) for v in values.split(",")], dtype=np.float64)
        if vec.shape != (file_dim,):
            raise EmbedError(f"{path}:{line_no}: id {rid!r} has {vec.size} values, expected {file_dim}")
        if not np.all(np.isfinite(vec)):
            raise EmbedError(f"{path}:{line_no}: id {rid!r} has non-finite values")
        out[rid] = vec
    return out


def save_embedding_file(embeddings: dict[str, np.ndarray], path, d: int) -> None:
    """Write embeddings in the standard file format (sorted by id)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim={d}\n")
        for rid in sorted(embeddings):
            vec = np.asarray(embeddings[rid], dtype=np.float64)
            if vec.shape != (d,):
                raise EmbedError(f"id {rid!r} has shape {vec.shape}, expected ({d},)")
            fh.write(rid + "\t" + ",".join(repr(float(v)) for v in vec) + "\n")


class SidecarClient:
    """Synchronous client for the embedding sidecar line protocol.

    ``source`` is either ``tcp://host:port`` or a command line to spawn with
    pipes on stdin/stdout. The first line the sidecar emits must be the
    banner ``{"ready": true, "dim": <d>, "model": "..."}``; the client adopts
    the advertised dimension.
    """

    def __init__(self, source: str):
        self._proc = None
        self._sock = None
        if source.startswith("tcp://"):
            host, _, port = source[len("tcp://") :].partition(":")
            try:
                self._sock = socket.create_connection((host, int(port)), timeout=30)
            except OSError as exc:
                raise SidecarProtocolError(f"cannot connect to sidecar at {source}: {exc}") from exc
            self._reader = self._sock.makefile("r", encoding="utf-8")
            self._writer = self._sock.makefile("w", encoding="utf-8")
        else:
            try:
                self._proc = subprocess.Popen(
                    shlex.split(source),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                )
            except OSError as exc:
                raise SidecarProtocolError(f"cannot start sidecar {source!r}: {exc}") from exc
            self._reader = self._proc.stdout
            self._writer = self._proc.stdin
        banner_line = self._reader.readline()
        if not banner_line:
            raise SidecarProtocolError("sidecar closed before sending a banner")
        try:
            banner = json.loads(banner_line)
        except json.JSONDecodeError as exc:
            raise SidecarProtocolError(f"bad banner line {banner_line!r}") from exc
        if not banner.get("ready") or not isinstance(banner.get("dim"), int) or banner["dim"] < 1:
            raise SidecarProtocolError(f"bad banner {banner!r}")
        self.dim: int = banner["dim"]
        self.model: str = str(banner.get("model", ""))

    def embed(self, requests: Sequence[EmbeddingRequest]) -> dict[str, np.ndarray]:
        """Send all requests, then read one response per request in order."""
        for req in requests:
            self._writer.write(json.dumps({"id": req.id, "title": req.title}) + "\n")
        self._writer.flush()
        out: dict[str, np.ndarray] = {}
        for req in requests:
            line = self._reader.readline()
            if not line:
                raise SidecarProtocolError(f"sidecar closed before answering id {req.id!r}")
            try:
                reply = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SidecarProtocolError(f"bad response line {line!r}") from exc
            rid = reply.get("id")
            if rid != req.id:
                raise SidecarProtocolError(f"response id {rid!r} does not match request {req.id!r}")
            if "error" in reply:
                raise SidecarProtocolError(f"sidecar error for id {rid!r}: {reply['error']}")
            vec = np.asarray(reply.get("vec", []), dtype=np.float64)
            if vec.shape != (self.dim,):
                raise SidecarProtocolError(
                    f"id {rid!r}: vector length {vec.size} does not match advertised dim {self.dim}"
                )
            out[rid] = vec
        return out

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.wait(timeout=10)
            self._proc = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def embed_titles(
    requests: Iterable[EmbeddingRequest],
    config: EmbedConfig,
) -> dict[str, np.ndarray]:
    """Produce one vector per request id under the configured provider."""
    requests = list(requests)
    ids = [r.id for r in requests]
    if len(set(ids)) != len(ids):
        raise EmbedError("duplicate ids in embedding requests")
    if config.provider == "hash":
        return {r.id: hash_embed(r.title, config.d, config.seed) for r in requests}
    if config.provider == "file":
        if not config.source:
            raise EmbedError("file provider requires a source path")
        table = load_embedding_file(config.source, config.d)
        missing = [rid for rid in ids if rid not in table]
        if missing:
            raise EmbedError(f"embedding file is missing ids: {missing[:5]}")
        return {rid: table[rid] for rid in ids}
    if not config.source:
        raise EmbedError("sidecar provider requires a source (command or tcp://host:port)")
    with SidecarClient(config.source) as client:
        return client.embed(requests)
