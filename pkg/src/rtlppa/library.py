"""Persistent rule library with cosine top-k retrieval.

File layout (UTF-8, one JSON object per line): a header
``{"format", "embedder", "dim", "threshold"}`` followed by one record per rule
with keys ``id, snippet, condition, action, score, pair_id, attempt,
embedding``. The file is append-only; :meth:`RuleLibrary.compact` rewrites it
with current embeddings.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import threading
from collections import Counter
from pathlib import Path
from typing import Protocol, Sequence

from .errors import ConfigError, EmbeddingDimensionError, EmptyLibraryError, RuleRejectedError, ToolUnavailableError
from .model import Rule, retrieval_text
from .textsim import bucket, dense_cosine, text_tokens

log = logging.getLogger(__name__)

FORMAT = "rtlppa-rules/1"
DEFAULT_THRESHOLD = 0.7


class Embedder(Protocol):
    dim: int
    fingerprint: str
    refits: bool

    def embed(self, text: str) -> tuple[float, ...]: ...


class HashedTfidfEmbedder:
    """TF-IDF over a hashed vocabulary of fixed dimension, L2-normalized.

    Tokens are hashed to buckets with CRC-32; idf is ``ln((1+D)/(1+df)) + 1``
    over the fitted corpus, so unseen buckets get the largest weight.
    """

    refits = True

    def __init__(self, dim: int = 4096):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.fingerprint = f"hashed-tfidf/{dim}"
        self._df: Counter[int] = Counter()
        self._docs = 0

    def fit(self, corpus: Sequence[str]) -> None:
        self._df = Counter()
        for text in corpus:
            self._df.update({bucket(t, self.dim) for t in text_tokens(text)})
        self._docs = len(corpus)

    def idf(self, index: int) -> float:
        return math.log((1 + self._docs) / (1 + self._df.get(index, 0))) + 1.0

    def embed(self, text: str) -> tuple[float, ...]:
        counts = Counter(bucket(t, self.dim) for t in text_tokens(text))
        vec = [0.0] * self.dim
        for index, count in counts.items():
            vec[index] = count * self.idf(index)
        norm = math.sqrt(math.fsum(v * v for v in vec))
        if norm == 0.0:
            return tuple(vec)
        return tuple(v / norm for v in vec)


class RemoteEmbedder:
    """Embeddings endpoint using the common ``/embeddings`` JSON schema.

    Configured by ``RTLPPA_EMBED_URL``, ``RTLPPA_EMBED_API_KEY`` and
    ``RTLPPA_EMBED_MODEL``. The dimension is learned from the first response.
    """

    refits = False

    def __init__(self, url: str | None = None, api_key: str | None = None, model: str | None = None, timeout: float = 120.0):
        from .llm import _post_json

        url = url or os.environ.get("RTLPPA_EMBED_URL")
        model = model or os.environ.get("RTLPPA_EMBED_MODEL")
        if not url or not model:
            raise ToolUnavailableError("set RTLPPA_EMBED_URL and RTLPPA_EMBED_MODEL to use a remote embedder")
        self.url = url if url.rstrip("/").endswith("/embeddings") else url.rstrip("/") + "/embeddings"
        self.api_key = api_key or os.environ.get("RTLPPA_EMBED_API_KEY")
        self.model = model
        self.timeout = timeout
        self.fingerprint = f"remote/{model}"
        self.dim = 0
        self._post = _post_json

    def embed(self, text: str) -> tuple[float, ...]:
        data = self._post(self.url, {"model": self.model, "input": text}, self.api_key, self.timeout)
        try:
            vec = tuple(float(x) for x in data["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ToolUnavailableError(f"malformed embedding response: {exc}") from exc
        if self.dim and len(vec) != self.dim:
            raise EmbeddingDimensionError(f"embedder returned {len(vec)} dims, expected {self.dim}")
        self.dim = len(vec)
        return vec


def make_embedder(name: str, **options) -> Embedder:
    if name in ("hashed-tfidf", "fallback", "tfidf"):
        return HashedTfidfEmbedder(**options)
    if name == "remote":
        return RemoteEmbedder(**options)
    raise ConfigError(f"unknown embedder {name!r}")


def _record(rule: Rule) -> dict:
    return {
        "id": rule.rule_id,
        "snippet": rule.snippet,
        "condition": rule.condition,
        "action": rule.action,
        "score": rule.score,
        "pair_id": rule.pair_id,
        "attempt": rule.attempt,
        "embedding": list(rule.embedding),
    }


def _from_record(data: dict) -> Rule:
    return Rule(
        data["snippet"], data["condition"], data["action"], float(data["score"]),
        tuple(float(x) for x in data.get("embedding", ())), data.get("pair_id", ""),
        int(data.get("attempt", 0)), int(data["id"]),
    )


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


class RuleLibrary:
    """Append-ordered rules, one writer at a time, any number of readers."""

    def __init__(self, path: str | Path | None = None, embedder: Embedder | None = None, threshold: float = DEFAULT_THRESHOLD):
        if not 0.0 < threshold <= 1.0:
            raise ConfigError(f"acceptance threshold must lie in (0, 1], got {threshold}")
        self.path = Path(path) if path is not None else None
        self.embedder = embedder
        self.threshold = threshold
        self.rules: list[Rule] = []
        self.dim: int | None = embedder.dim if embedder is not None and embedder.refits else None
        self._lock = threading.Lock()

    # construction -----------------------------------------------------------

    @classmethod
    def open(cls, path: str | Path, embedder: Embedder | None = None, threshold: float = DEFAULT_THRESHOLD,
             create: bool = True) -> "RuleLibrary":
        lib = cls(path, embedder, threshold)
        p = Path(path)
        if p.exists():
            lib._load()
        elif not create:
            raise FileNotFoundError(f"rule library {p} does not exist")
        else:
            lib._write_all()
        return lib

    def _header(self) -> dict:
        return {
            "format": FORMAT,
            "embedder": self.embedder.fingerprint if self.embedder else None,
            "dim": self.dim,
            "threshold": self.threshold,
        }

    def _load(self) -> None:
        assert self.path is not None
        lines = self.path.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ConfigError(f"{self.path}: empty rule library file")
        header = json.loads(lines[0])
        if header.get("format") != FORMAT:
            raise ConfigError(f"{self.path}: unsupported format {header.get('format')!r}")
        rules = [_from_record(json.loads(line)) for line in lines[1:] if line.strip()]
        ids = [r.rule_id for r in rules]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"{self.path}: duplicate rule ids")
        fingerprint = header.get("embedder")
        if self.embedder is not None and fingerprint not in (None, self.embedder.fingerprint):
            log.warning("library embedded with %s, re-embedding with %s", fingerprint, self.embedder.fingerprint)
            rules = [dataclasses.replace(r, embedding=self.embedder.embed(r.retrieval_text)) for r in rules]
        self.rules = rules
        self.dim = header.get("dim")
        if self.embedder is not None and self.embedder.refits:
            self._refit()
        elif rules:
            self.dim = len(rules[0].embedding)

    # mutation ---------------------------------------------------------------

    def _refit(self) -> None:
        emb = self.embedder
        emb.fit([r.retrieval_text for r in self.rules])
        self.rules = [dataclasses.replace(r, embedding=emb.embed(r.retrieval_text)) for r in self.rules]
        self.dim = emb.dim

    def add_rule(self, rule: Rule) -> int:
        """Append ``rule`` (score strictly above the threshold) and persist it; returns its id."""
        if not rule.score > self.threshold:
            raise RuleRejectedError(f"score {rule.score:.4f} does not exceed threshold {self.threshold}")
        with self._lock:
            rule_id = max((r.rule_id for r in self.rules), default=-1) + 1
            emb = self.embedder
            if emb is not None and emb.refits:
                self.rules.append(dataclasses.replace(rule, rule_id=rule_id, embedding=()))
                self._refit()
                stored = self.rules[-1]
            else:
                vector = rule.embedding or (emb.embed(rule.retrieval_text) if emb else ())
                if not vector:
                    raise EmbeddingDimensionError("rule has no embedding and the library has no embedder")
                if self.dim is not None and len(vector) != self.dim:
                    raise EmbeddingDimensionError(f"embedding has {len(vector)} dims, library uses {self.dim}")
                stored = dataclasses.replace(rule, rule_id=rule_id, embedding=tuple(vector))
                self.rules.append(stored)
                first = self.dim is None
                self.dim = len(vector)
                if first and self.path is not None:
                    self._write_all()
                    return rule_id
            if self.path is not None:
                if not self.path.exists():
                    self._write_all()
                else:
                    with open(self.path, "a", encoding="utf-8") as fh:
                        fh.write(_dump(_record(stored)))
                        fh.flush()
                        os.fsync(fh.fileno())
            return rule_id

    def _write_all(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(_dump(self._header()))
            for rule in self.rules:
                fh.write(_dump(_record(rule)))
        os.replace(tmp, self.path)

    def compact(self) -> None:
        """Rewrite the file with the header and current embeddings."""
        with self._lock:
            self._write_all()

    # queries ----------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.rules)

    def retrieve_vector(self, query: Sequence[float], top_k: int = 3) -> list[tuple[Rule, float]]:
        if not self.rules:
            raise EmptyLibraryError("rule library is empty")
        if top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.dim is not None and len(query) != self.dim:
            raise EmbeddingDimensionError(f"query has {len(query)} dims, library uses {self.dim}")
        scored = [(rule, dense_cosine(query, rule.embedding)) for rule in self.rules]
        scored.sort(key=lambda item: (-item[1], item[0].rule_id))
        return scored[:top_k]

    def retrieve(self, condition: str, action: str, top_k: int = 3) -> list[Rule]:
        """Rules most similar to the joint condition/action text, best first; ties go to the older rule."""
        if not self.rules:
            raise EmptyLibraryError("rule library is empty")
        if self.embedder is None:
            raise ConfigError("text retrieval needs an embedder")
        query = self.embedder.embed(retrieval_text(condition, action))
        return [rule for rule, _ in self.retrieve_vector(query, top_k)]

    def stats(self) -> dict:
        scores = [r.score for r in self.rules]
        return {
            "rules": len(scores),
            "dim": self.dim,
            "embedder": self.embedder.fingerprint if self.embedder else None,
            "mean_score": math.fsum(scores) / len(scores) if scores else None,
            "min_score": min(scores, default=None),
            "max_score": max(scores, default=None),
        }


__all__ = ["Embedder", "HashedTfidfEmbedder", "RemoteEmbedder", "RuleLibrary", "make_embedder"]
