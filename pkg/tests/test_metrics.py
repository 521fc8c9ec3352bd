from __future__ import annotations

import itertools
import statistics
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from rtlppa.errors import DomainError
from rtlppa.metrics import SampleSet, aggregate, impr_at_k, subset_weights


def brute_force(values, k):
    return statistics.fmean(max(c) for c in itertools.combinations(values, k))


def test_worked_example():
    # subsets of two: {0.3,0.2} {0.3,0.1} {0.2,0.1} -> (0.3 + 0.3 + 0.2) / 3
    assert impr_at_k([0.3, 0.2, 0.1], 2) == pytest.approx(0.26667, abs=1e-5)


def test_edges():
    vals = [0.05, 0.4, 0.0, 0.2]
    assert impr_at_k(vals, 1) == pytest.approx(statistics.fmean(vals), abs=1e-12)
    assert impr_at_k(vals, 4) == pytest.approx(0.4, abs=1e-12)
    assert impr_at_k([0.0] * 5, 3) == 0.0


def test_weights_sum_to_one_and_match_binomials():
    from math import comb
    for n in range(1, 12):
        for k in range(1, n + 1):
            w = subset_weights(n, k)
            assert sum(w) == 1
            assert w == [Fraction(comb(n - j, k - 1), comb(n, k)) for j in range(1, n + 1)]


def test_large_n_does_not_overflow():
    vals = [i / 1000 for i in range(210)]
    assert impr_at_k(vals, 100) == pytest.approx(brute_force_closed(vals, 100), abs=1e-9)


def brute_force_closed(values, k):
    from math import comb
    ordered = sorted(values)
    return sum(comb(i, k - 1) * v for i, v in enumerate(ordered)) / comb(len(values), k)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.data())
def test_matches_enumeration(values, data):
    k = data.draw(st.integers(1, len(values)))
    assert impr_at_k(values, k) == pytest.approx(brute_force(values, k), abs=1e-9)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=15), st.randoms())
def test_monotone_in_k_and_permutation_invariant(values, rnd):
    series = [impr_at_k(values, k) for k in range(1, len(values) + 1)]
    assert all(a <= b + 1e-12 for a, b in zip(series, series[1:]))
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert impr_at_k(shuffled, 2) == impr_at_k(values, 2)


def test_aggregate_examples():
    a = SampleSet("a", (0.3, 0.2, 0.1))
    b = SampleSet("b", (0.0, 0.0, 0.0))
    assert aggregate([a, b], 2) == pytest.approx(0.4 / 3, abs=1e-12)
    assert aggregate([a], 1) == pytest.approx(0.2, abs=1e-12)


def test_domain_errors():
    with pytest.raises(DomainError):
        impr_at_k([0.1, 0.2], 3)
    with pytest.raises(DomainError):
        impr_at_k([0.1, 0.2], 0)
    with pytest.raises(DomainError):
        SampleSet("x", ())
    with pytest.raises(DomainError):
        SampleSet("x", (0.1, 1.2))
    with pytest.raises(DomainError):
        aggregate([], 1)
