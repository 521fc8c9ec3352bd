from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from rtlppa.errors import DomainError
from rtlppa.model import (
    Candidate,
    CodePair,
    EquivalenceVerdict,
    Metric,
    PpaMetrics,
    RtlDesign,
    Rule,
    SearchConfig,
    improvement,
    relative_difference,
    total_budget,
)

EQ = EquivalenceVerdict.passed()
NEQ = EquivalenceVerdict.inequivalent("MISMATCH y 3 1 2")
UNK = EquivalenceVerdict.inconclusive("timeout")


def area(x: float) -> PpaMetrics:
    return PpaMetrics(x, 1.0, 0.1)


def test_scalar_follows_target():
    m = PpaMetrics(10.0, 2.0, 0.5, "delay")
    assert m.scalar() == 2.0
    assert m.retarget(Metric.POWER).scalar() == 0.5
    assert PpaMetrics.from_dict(m.to_dict()) == m


@pytest.mark.parametrize("field", ["area", "delay", "power"])
def test_negative_metrics_rejected(field):
    values = {"area": 1.0, "delay": 1.0, "power": 1.0, field: -0.1}
    with pytest.raises(DomainError):
        PpaMetrics(**values)


def test_unknown_metric():
    with pytest.raises(DomainError):
        Metric.parse("speed")


def test_design_requires_source():
    with pytest.raises(DomainError):
        RtlDesign("   ", "blank")
    assert RtlDesign("module m; endmodule", "m").digest == RtlDesign("module m; endmodule", "other").digest


@pytest.mark.parametrize(
    "orig, cand, verdict, expected",
    [(100, 80, EQ, 0.20), (100, 80, NEQ, 0.0), (100, 120, EQ, 0.0), (100, 100, EQ, 0.0), (100, 80, UNK, 0.0)],
)
def test_improvement_examples(orig, cand, verdict, expected):
    assert improvement(area(orig), area(cand), verdict) == expected


def test_improvement_needs_positive_original():
    with pytest.raises(DomainError):
        improvement(area(0), area(0), EQ)


def test_improvement_target_mismatch():
    with pytest.raises(DomainError):
        improvement(area(10), PpaMetrics(5, 1, 1, "delay"), EQ)


@pytest.mark.parametrize("a, b, expected", [(100, 94, 0.06), (100, 100, 0.0), (50, 100, 0.5)])
def test_relative_difference_examples(a, b, expected):
    assert relative_difference(area(a), area(b)) == pytest.approx(expected, abs=1e-15)


def test_relative_difference_zero():
    with pytest.raises(DomainError):
        relative_difference(area(0), area(0))


positive = st.floats(min_value=1e-3, max_value=1e6, allow_nan=False)


@given(positive, positive, st.sampled_from([EQ, NEQ, UNK]))
def test_improvement_range(orig, cand, verdict):
    value = improvement(area(orig), area(cand), verdict)
    assert 0.0 <= value <= 1.0
    if not verdict.equivalent:
        assert value == 0.0


@given(positive, positive)
def test_relative_difference_symmetric(a, b):
    assert relative_difference(area(a), area(b)) == relative_difference(area(b), area(a))


@pytest.mark.parametrize("k, m, s, n", [(2, 3, 3, 15), (3, 5, 4, 50), (3, 8, 5, 104), (5, 10, 5, 210)])
def test_total_budget_configurations(k, m, s, n):
    cfg = SearchConfig(k, m, s)
    assert total_budget(cfg) == n == cfg.budget
    assert cfg.label == f"{k}-{m}-{s}"


@given(st.integers(1, 20), st.integers(1, 20), st.integers(2, 20))
def test_total_budget_monotone(k, m, s):
    base = total_budget(SearchConfig(k, m, s))
    assert total_budget(SearchConfig(k + 1, m, s)) > base
    assert total_budget(SearchConfig(k, m + 1, s)) > base
    assert total_budget(SearchConfig(k, m, s + 1)) > base


@pytest.mark.parametrize("kwargs", [{"beam_width": 0}, {"num_expand": -1}, {"max_steps": 0}, {"diversity_weight": 1.5}])
def test_search_config_validation(kwargs):
    with pytest.raises(DomainError):
        SearchConfig(**kwargs)


def test_code_pair_orientation():
    a, b = RtlDesign("module a; endmodule", "a"), RtlDesign("module a; endmodule // b", "b")
    pair = CodePair(a, b, area(100), area(90), "p")
    assert pair.relative_gain == pytest.approx(0.1)
    with pytest.raises(DomainError):
        CodePair(a, b, area(90), area(100))


def test_rule_requires_text():
    with pytest.raises(DomainError):
        Rule("x", " ", "y", 0.8)
    with pytest.raises(DomainError):
        Rule("x", "c", "y", 1.2)


def test_candidate_depth_parent():
    d = RtlDesign("module a; endmodule", "a")
    Candidate(0, d, None, 0, EQ)
    with pytest.raises(DomainError):
        Candidate(1, d, None, 1, EQ)
    with pytest.raises(DomainError):
        Candidate(1, d, 0, 0, EQ)
