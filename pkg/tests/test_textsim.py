from __future__ import annotations

import random

import pytest
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.metrics.pairwise import cosine_similarity

from rtlppa.textsim import fitted_vectors, sparse_cosine, text_tokens
from rtlppa.verilog import strip_comments

from .helpers import corpus


def test_tokens():
    assert text_tokens("assign Sum_out = a + B2; // carry\n") == ["assign", "sum", "out", "b2"]


def _sklearn_pairwise(texts):
    vec = TfidfVectorizer(
        preprocessor=lambda t: strip_comments(t).lower(),
        token_pattern=r"[a-z0-9]{2,}",
        smooth_idf=True,
        sublinear_tf=False,
        norm="l2",
    )
    return cosine_similarity(vec.fit_transform(texts))


def test_matches_sklearn_on_corpus():
    texts = [d.source for d in corpus()]
    ours = fitted_vectors(texts)
    ref = _sklearn_pairwise(texts)
    for i in range(len(texts)):
        for j in range(len(texts)):
            assert sparse_cosine(ours[i], ours[j]) == pytest.approx(ref[i, j], abs=1e-12)


def test_matches_sklearn_on_random_documents():
    rng = random.Random(7)
    vocab = ["wire", "reg", "assign", "sum", "carry", "shift", "mux", "sel", "data", "q", "x1"]
    for _ in range(30):
        docs = [" ".join(rng.choice(vocab) for _ in range(rng.randint(2, 12))) for _ in range(rng.randint(2, 6))]
        if not all(text_tokens(d) for d in docs):
            continue
        ours = fitted_vectors(docs)
        ref = _sklearn_pairwise(docs)
        for i in range(len(docs)):
            for j in range(len(docs)):
                assert sparse_cosine(ours[i], ours[j]) == pytest.approx(ref[i, j], abs=1e-12)


def test_empty_vector_similarity():
    assert sparse_cosine({}, {"a": 1.0}) == 0.0
