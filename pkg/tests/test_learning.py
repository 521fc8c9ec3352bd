from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from rtlppa.errors import DegeneratePairError, DomainError, InputDesignError
from rtlppa.learning import (
    Checkpoint,
    LearningConfig,
    entropy_bits,
    evaluate_design,
    explore,
    improvement_bin,
    induce_rules,
    learn,
    mid_range,
    percentile,
    score_rewrite,
    score_rule,
    select_count,
    select_designs,
)
from rtlppa.library import HashedTfidfEmbedder, RuleLibrary
from rtlppa.llm import LlmGateway, ScriptedLLM, fence
from rtlppa.model import CodePair, PpaMetrics, RtlDesign, RuleDraft
from rtlppa.simulators import ScriptedSimulator
from rtlppa.synthesis import MockSynthesizer
from rtlppa.toolchain import Toolchain

BAD = "MISMATCH y 0 1 0\nFAIL"


def tools(script: dict, sim_rules: dict | None = None) -> Toolchain:
    return Toolchain(LlmGateway(ScriptedLLM(script), max_in_flight=1), MockSynthesizer(),
                     ScriptedSimulator(rules={"// bad": BAD, **(sim_rules or {})}))


def module(body: str, name: str = "d") -> str:
    return f"module {name}(input [3:0] a, input [3:0] b, input [3:0] c, output [7:0] y);\n  assign y = {body};\nendmodule\n"


# ---------------------------------------------------------------------------
# arithmetic


def test_percentile_band():
    values = [float(v) for v in range(1, 101)]
    assert percentile(values, 25) == 25.75
    assert percentile(values, 75) == 75.25
    designs = [(RtlDesign(module("a"), f"d{v:03d}"), float(v)) for v in range(1, 101)]
    kept = mid_range(designs)
    assert [d.design_id for d in kept] == [f"d{v:03d}" for v in range(26, 76)]
    with pytest.raises(DomainError):
        percentile([], 50)


def test_entropy_examples():
    assert entropy_bits([-0.5, -0.2, 0.1, 0.4]) == pytest.approx(2.0, abs=1e-12)
    assert entropy_bits([0.01, 0.02, 0.03]) == 0.0
    assert entropy_bits([]) == 0.0
    assert entropy_bits([0.1, 0.1, 0.4, 0.4]) == pytest.approx(1.0, abs=1e-12)


def test_bins_are_fixed_width_and_clamped():
    cfg = LearningConfig()
    assert cfg.num_bins == 40
    assert improvement_bin(0.0) == 20 and improvement_bin(0.05) == 21 and improvement_bin(0.0499) == 20
    assert improvement_bin(-3.0) == 0 and improvement_bin(1.0) == 39


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=60))
def test_entropy_bounds(values):
    h = entropy_bits(values)
    assert 0.0 <= h <= 5.33  # log2(40)


def test_select_count_examples():
    assert select_count(8, 25) == 2
    assert select_count(5, 25) == 2
    assert select_count(1, 25) == 1
    assert select_count(100, 25) == 25


def test_select_ties_by_id():
    ds = [(RtlDesign(module("a"), name), h) for name, h in [("zeta", 1.0), ("alpha", 1.0), ("mid", 2.0), ("low", 0.1)]]
    assert [d.design_id for d in select_designs(ds, 50)] == ["mid", "alpha"]


def test_score_rewrite_examples():
    assert score_rewrite(100, 90, 100, True) == pytest.approx(0.25)
    assert score_rewrite(100, 90, 90, True) == pytest.approx(0.75)
    assert score_rewrite(100, 90, 90, False) == 0.0
    assert score_rewrite(100, 90, 60, True) == 1.0
    assert score_rewrite(100, 90, 150, True) == 0.0
    with pytest.raises(DegeneratePairError):
        score_rewrite(100, 100, 90, True)


def test_config_validation():
    with pytest.raises(DomainError):
        LearningConfig(top_percent=0)
    with pytest.raises(DomainError):
        LearningConfig(area_band=(80, 20))


# ---------------------------------------------------------------------------
# pipeline stages

# a * 2 + a * 2 -> 72, a * 4 -> 32, a << 2 -> 4
NON = RtlDesign(module("a * 2 + a * 2", "dbl"), "dbl")
OPT = RtlDesign(module("a * 4", "dbl"), "dbl.opt")
BETTER = module("a << 2", "dbl")
NO_GAIN = NON.source
WRONG = module("a << 3", "dbl") + "// bad\n"
DRAFT = RuleDraft("assign y = a * 2 + a * 2;", "repeated multiplication by a power of two", "use one shift",
                  "dbl~opt", 0)


def pair() -> CodePair:
    t = tools({})
    return CodePair(NON, OPT, t.measure(NON), t.measure(OPT), "dbl~opt")


def test_pair_areas():
    p = pair()
    assert (p.ppa_non.area, p.ppa_opt.area) == (72.0, 32.0)
    assert tools({}).measure(RtlDesign(BETTER, "b")).area == 4.0


@pytest.mark.parametrize("samples, expected", [
    ([OPT.source] * 3, 0.75),
    ([OPT.source, NO_GAIN, NO_GAIN], 1.25 / 3),
    ([BETTER, OPT.source, OPT.source], 2.5 / 3),
    ([OPT.source, NO_GAIN, WRONG], 1.0 / 3),
])
def test_score_rule_means(samples, expected):
    t = tools({"optimize": [fence(s) for s in samples]})
    result = score_rule(DRAFT, pair(), LearningConfig(), t)
    assert result.mean == pytest.approx(expected, abs=1e-4)
    assert len(result.attempts) == 3


def test_score_rule_fenceless_counts_as_zero():
    t = tools({"optimize": [fence(OPT.source), "no code here", fence(OPT.source)]})
    assert score_rule(DRAFT, pair(), LearningConfig(), t).attempts == (0.75, 0.0, 0.75)


def test_induce_provenance():
    raw = "\n".join(f"[SNIPPET]\nx{i}\n[CONDITION]\nc{i}\n[ACTION]\na{i}" for i in range(2))
    drafts = induce_rules(pair(), LearningConfig(), tools({"induce": raw}))
    assert [(d.pair_id, d.attempt, d.action) for d in drafts] == [("dbl~opt", 0, "a0"), ("dbl~opt", 1, "a1")]


def test_explore_skips_unsynthesizable():
    good = RtlDesign(module("a + b", "good"), "good")
    broken = RtlDesign("module broken(input a, output y); missing_ip u (.a(a), .y(y)); endmodule\n", "broken")
    out = explore([good, broken], LearningConfig(rewrites_per_design=3), tools({"rewrite": "@echo-variant"}))
    assert list(out) == ["good"]
    assert len(out["good"]) == 3


# mock areas: mul 32, add 8, shift 4, compare 3, bitwise 1
ORIG = RtlDesign(module("a * b + c + b ^ (a & b)", "ev"), "ev")            # 32 + 8 + 8 + 1 + 1 = 50
GAIN6 = RtlDesign(module("a * b + ((b << 1) > a)", "ev"), "ev.r0")        # 32 + 8 + 4 + 3 = 47
GAIN4 = RtlDesign(module("a * b + c + b", "ev"), "ev.r1")                  # 32 + 8 + 8 = 48
WORSE = RtlDesign(module("a * b + c + b + (a << 1)", "ev"), "ev.r2")       # 32 + 24 + 4 = 60
NEQ = RtlDesign(module("a", "ev") + "// bad\n", "ev.r3")


def test_evaluation_fixture_areas():
    t = tools({})
    assert [t.measure(d).area for d in (ORIG, GAIN6, GAIN4, WORSE)] == [50.0, 47.0, 48.0, 60.0]


def test_evaluate_design_pairs_and_entropy():
    ev = evaluate_design(ORIG, [GAIN6, GAIN4, WORSE, NEQ], LearningConfig(), tools({}))
    assert [(p.non_optimized.design_id, p.optimized.design_id) for p in ev.pairs] == [("ev", "ev.r0"), ("ev.r2", "ev")]
    # improvements 0.06, 0.04 and -0.2 land in three distinct bins; the inequivalent rewrite is ignored
    assert ev.entropy == pytest.approx(1.584962500721156, abs=1e-12)
    assert [r.improvement for r in ev.rewrites][:3] == pytest.approx([0.06, 0.04, -0.2])
    assert ev.rewrites[3].improvement is None and ev.rewrites[3].verdict.detail.startswith("MISMATCH")


def test_evaluate_design_errors():
    broken = RtlDesign("module ev(input a, output y); missing_ip u (.a(a), .y(y)); endmodule\n", "ev")
    with pytest.raises(InputDesignError):
        evaluate_design(broken, [], LearningConfig(), tools({}))


RULES = "\n".join(f"[SNIPPET]\nx{i}\n[CONDITION]\nwhen {w}\n[ACTION]\ndo {w}" for i, w in enumerate(["shift", "share"]))
LEARN_SCRIPT = {
    "rewrite": {"cases": [{"when": {"code": "module ev"}, "then": [fence(GAIN6.source), fence(GAIN4.source)]}],
                "default": "@echo"},
    "induce": RULES,
    "optimize": {"cases": [{"when": {"rules": "do shift"}, "then": fence(GAIN6.source)}], "default": "@echo"},
}


def test_learn_end_to_end_and_resume(tmp_path):
    flat = RtlDesign(module("a & b", "flat"), "flat")
    corpus = [ORIG, flat]
    cfg = LearningConfig(rewrites_per_design=2, top_percent=50)
    library = RuleLibrary(embedder=HashedTfidfEmbedder(dim=256))
    ckpt = tmp_path / "progress.jsonl"
    report = learn(corpus, cfg, tools(LEARN_SCRIPT), library, Checkpoint(ckpt))
    assert report.selected == ["ev"]
    assert (report.pairs, report.drafts, report.accepted, report.rejected) == (1, 2, 1, 1)
    assert [r.action for r in library.rules] == ["do shift"]
    assert library.rules[0].pair_id == "ev~ev.r0" and library.rules[0].score == pytest.approx(0.75)

    resumed_tools = tools({})
    again = learn(corpus, cfg, resumed_tools, RuleLibrary(embedder=HashedTfidfEmbedder(dim=256)), Checkpoint(ckpt))
    assert again.selected == ["ev"] and again.drafts == 0
    assert resumed_tools.gateway.adapter.calls == []
