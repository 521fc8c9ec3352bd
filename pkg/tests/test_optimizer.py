from __future__ import annotations

import io
import json
import random

import pytest
from hypothesis import given, strategies as st

from rtlppa.errors import DomainError, InputDesignError
from rtlppa.library import HashedTfidfEmbedder, RuleLibrary
from rtlppa.llm import LlmGateway, ScriptedLLM, fence
from rtlppa.model import Candidate, EquivalenceVerdict, PpaMetrics, RtlDesign, Rule, SearchConfig
from rtlppa.optimizer import (
    BeamSearch,
    arao_step,
    beam_search,
    composite_score,
    diversity_score,
    ppa_score,
    sample_improvements,
    select_beam,
    write_archive,
)
from rtlppa.simulators import ScriptedSimulator
from rtlppa.synthesis import MockSynthesizer
from rtlppa.toolchain import Toolchain

from .helpers import DATA, sat_inequivalent, yosys_binary

BEAM = DATA / "beam"
ROOT = RtlDesign((BEAM / "sum6.v").read_text(), "sum6")
MISMATCH = {"@mismatch": "MISMATCH total 7 1a 1c\nFAIL"}


def tools(script) -> Toolchain:
    llm = ScriptedLLM(json.loads((BEAM / "script.json").read_text()) if script is None else script)
    return Toolchain(LlmGateway(llm, max_in_flight=1), MockSynthesizer(), ScriptedSimulator(rules=dict(MISMATCH)))


def archive_text(result, cfg) -> str:
    buf = io.StringIO()
    write_archive(result, cfg, buf, design_id="sum6")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# scores


def test_composite_examples():
    assert composite_score(0.4, 0.7) == pytest.approx(0.625)
    assert composite_score(0.0, 0.0) == 0.0
    assert composite_score(0.9, 0.3, omega=0.0) == pytest.approx(0.3)
    with pytest.raises(DomainError):
        composite_score(0.5, 0.5, omega=1.5)


def test_ppa_score_examples():
    assert ppa_score(100, 100, True) == 0.5
    assert ppa_score(100, 50, True) == 0.75
    assert ppa_score(100, 50, False) == 0.0
    assert ppa_score(100, 400, True) == 0.0
    with pytest.raises(DomainError):
        ppa_score(0, 1, True)


def test_diversity_examples():
    src = "assign total = alpha + beta;"
    assert diversity_score(src, [src]) == pytest.approx(0.0, abs=1e-12)
    assert diversity_score("assign total = alpha + beta;", ["wire carry_chain;"]) == 1.0
    # equal to the grandparent: the maximum over ancestors wins
    assert diversity_score(src, [src, "wire carry_chain;"]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        diversity_score(src, [])


def _cand(i: int, area: float, score: float) -> Candidate:
    return Candidate(i, RtlDesign(f"module m; endmodule // {i}", f"c{i}"), 0, 1, EquivalenceVerdict.passed(),
                     PpaMetrics(area, 1.0, 0.1), score=score)


@given(st.floats(0.01, 100.0), st.integers(0, 2**31))
def test_ranking_invariant_under_scaling(factor, seed):
    rng = random.Random(seed)
    root = rng.uniform(10, 100)
    areas = [rng.choice([root, rng.uniform(1, 200)]) for _ in range(8)]
    divs = [rng.random() for _ in areas]

    def ranked(scale):
        pool = [_cand(i + 1, a * scale, composite_score(d, ppa_score(root * scale, a * scale, True)))
                for i, (a, d) in enumerate(zip(areas, divs))]
        return [c.cand_id for c in select_beam(pool, 3)]

    assert ranked(1.0) == ranked(factor)


def test_select_beam_tiebreaks():
    pool = [_cand(3, 10, 0.5), _cand(1, 10, 0.5), _cand(2, 5, 0.5), _cand(4, 1, 0.9)]
    assert [c.cand_id for c in select_beam(pool, 3)][:2] == [4, 2]


# ---------------------------------------------------------------------------
# search


@pytest.mark.parametrize("label, budget", [((2, 3, 3), 15), ((3, 5, 4), 50), ((3, 8, 5), 104), ((5, 10, 5), 210)])
def test_budget_is_reached_exactly(label, budget):
    k, m, s = label
    cfg = SearchConfig(k, m, s)
    assert cfg.budget == budget
    result = beam_search(ROOT, cfg, None, tools({"optimize": "@echo-variant"}))
    assert result.generations == budget
    assert len(result.archive) == budget + 1


def test_echo_keeps_root():
    cfg = SearchConfig(2, 3, 3)
    result = beam_search(ROOT, cfg, None, tools({"optimize": "@echo"}))
    assert result.best.cand_id == 0 and result.best.improvement == 0.0
    assert all(s["beam"] == [0] for s in result.steps)
    assert result.archive[0].score == pytest.approx(0.375)
    assert all(c.note == "duplicate source" for c in result.archive[1:])
    assert result.generations == 3 * 3  # the beam never grows past the root, so each step expands once


def test_arao_step_filters_ineligible():
    script = {"optimize": [fence(ROOT.source + "// ok\n"), fence(ROOT.source + "// @mismatch\n"), "no code"]}
    search = BeamSearch(ROOT, SearchConfig(2, 3, 3), tools(script))
    root = search.start()
    out = arao_step(search, root, 3)
    assert len(out) == 2 and len(search.archive) == 3
    assert [c.eligible for c in out] == [True, False]
    assert search.generations == 3


def test_empty_library_means_rule_free():
    llm = ScriptedLLM({"optimize": "@echo-variant"})
    t = Toolchain(LlmGateway(llm, max_in_flight=1), MockSynthesizer(), ScriptedSimulator())
    result = beam_search(ROOT, SearchConfig(1, 1, 1), RuleLibrary(embedder=HashedTfidfEmbedder(dim=64)), t)
    assert {c[0] for c in llm.calls} == {"speculate", "optimize"}
    assert len(result.archive) == 2


def test_library_rules_reach_the_prompt():
    library = RuleLibrary(embedder=HashedTfidfEmbedder(dim=256))
    library.add_rule(Rule("x + x", "an operand is added twice", "shift it left once", 0.9))
    script = {"speculate": "", "adapt": "",
              "optimize": {"cases": [{"when": {"rules": "shift it left once"}, "then": "@echo-variant"}],
                           "default": "nothing"}}
    t = Toolchain(LlmGateway(ScriptedLLM(script), max_in_flight=1), MockSynthesizer(), ScriptedSimulator())
    result = beam_search(ROOT, SearchConfig(1, 2, 1), library, t)
    assert len(result.archive) == 3  # both samples carried code, so the unadapted rule text was used


def test_beam_scenario():
    cfg = SearchConfig(2, 3, 3)
    result = beam_search(ROOT, cfg, None, tools(None))
    assert result.archive[0].ppa.area == 40.0
    assert result.best_improvement_by_step() == [0.0, 0.1, 0.1]
    assert result.best.cand_id == 4 and result.best.ppa.area == 36.0
    assert 4 in result.steps[1]["beam"]
    assert [s["generations"] for s in result.steps] == [3, 9, 15]
    assert result.steps[1]["new"] == [4, 5, 6, 7, 8]
    improvements = [s["best_improvement"] for s in result.steps]
    assert improvements == sorted(improvements)


def test_beam_holds_only_valid_candidates():
    result = beam_search(ROOT, SearchConfig(2, 3, 3), None, tools(None))
    by_id = {c.cand_id: c for c in result.archive}
    for step in result.steps:
        for cid in step["beam"]:
            assert by_id[cid].verdict.equivalent and by_id[cid].ppa is not None


def test_archive_is_byte_identical():
    cfg = SearchConfig(2, 3, 3)
    first = archive_text(beam_search(ROOT, cfg, None, tools(None)), cfg)
    second = archive_text(beam_search(ROOT, cfg, None, tools(None)), cfg)
    assert first == second
    records = [json.loads(line) for line in first.splitlines()]
    assert records[0]["kind"] == "run" and records[-1]["kind"] == "summary"
    samples = sample_improvements(records)
    assert len(samples) == 15 and max(samples) == pytest.approx(0.1)


def test_inequivalent_original_is_rejected():
    t = Toolchain(LlmGateway(ScriptedLLM({})), MockSynthesizer(), ScriptedSimulator(default="MISMATCH total 0 1 2\nFAIL"))
    with pytest.raises(InputDesignError):
        beam_search(ROOT, SearchConfig(), None, t)


@pytest.mark.slow
@pytest.mark.skipif(yosys_binary() is None, reason="yosys not installed")
def test_fixture_verdicts_agree_with_sat():
    script = json.loads((BEAM / "script.json").read_text())
    for case in script["optimize"]["cases"]:
        for item in case["then"]:
            if not item.startswith("```"):
                continue
            body = item.split("\n", 1)[1].rsplit("```", 1)[0]
            variant = RtlDesign(body, "v")
            assert sat_inequivalent(ROOT, variant) == ("@mismatch" in body)
