"""TF-IDF vectors and cosine similarity over source/rule text.

Tokenization: strip Verilog comments, lowercase, split on non-alphanumeric
characters, drop tokens shorter than two characters. Term frequency is the raw
count; idf is ``ln((1 + D) / (1 + df)) + 1``; vectors are L2-normalized.
"""

from __future__ import annotations

import math
import re
import zlib
from collections import Counter
from typing import Iterable, Mapping, Sequence

from .verilog import strip_comments

_SPLIT_RE = re.compile(r"[^a-z0-9]+")


def text_tokens(text: str) -> list[str]:
    lowered = strip_comments(text).lower()
    return [t for t in _SPLIT_RE.split(lowered) if len(t) > 1]


def smooth_idf(documents: Sequence[Iterable[str]]) -> dict[str, float]:
    n_docs = len(documents)
    df: Counter[str] = Counter()
    for doc in documents:
        df.update(set(doc))
    return {term: math.log((1 + n_docs) / (1 + count)) + 1.0 for term, count in df.items()}


def tfidf_vector(tokens: Iterable[str], idf: Mapping[str, float]) -> dict[str, float]:
    counts = Counter(tokens)
    vec = {term: count * idf[term] for term, count in counts.items() if term in idf}
    norm = math.sqrt(sum(v * v for v in vec.values()))
    if norm == 0.0:
        return {}
    return {term: v / norm for term, v in vec.items()}


def sparse_cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    """Cosine of two sparse vectors; 0 when either is zero."""
    if not a or not b:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    dot = sum(v * b.get(k, 0.0) for k, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (na * nb)))


def dense_cosine(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    dot = math.fsum(x * y for x, y in zip(a, b))
    na = math.sqrt(math.fsum(x * x for x in a))
    nb = math.sqrt(math.fsum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (na * nb)))


def fitted_vectors(texts: Sequence[str]) -> list[dict[str, float]]:
    """TF-IDF vectors of ``texts`` with idf fitted over exactly those texts."""
    docs = [text_tokens(t) for t in texts]
    idf = smooth_idf(docs)
    return [tfidf_vector(doc, idf) for doc in docs]


def max_similarity(candidate: str, others: Sequence[str]) -> float:
    """Largest cosine between ``candidate`` and any of ``others`` (idf fitted over all of them)."""
    vectors = fitted_vectors([candidate, *others])
    head, rest = vectors[0], vectors[1:]
    return max((sparse_cosine(head, v) for v in rest), default=0.0)


def bucket(term: str, dim: int) -> int:
    """Stable hash bucket for the hashed vocabulary."""
    return zlib.crc32(term.encode("utf-8")) % dim
