"""Rule learning: explore rewrites, evaluate them, select designs, induce and score rules."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DegeneratePairError, DomainError, InputDesignError, RuleRejectedError, ToolUnavailableError
from .library import RuleLibrary
from .llm import TemplateId, sample_rewrites
from .model import CodePair, EquivalenceVerdict, PpaMetrics, RtlDesign, Rule, RuleDraft, relative_difference
from .synthesis import check_synthesizable
from .toolchain import Toolchain

log = logging.getLogger(__name__)

DEGENERATE_EPS = 1e-6


@dataclass(frozen=True)
class LearningConfig:
    rewrites_per_design: int = 50
    top_percent: float = 25.0
    pair_threshold: float = 0.05
    rules_per_pair: int = 2
    reapply_attempts: int = 3
    alpha: float = 0.25
    beta: float = 0.5
    accept_threshold: float = 0.7
    bin_width: float = 0.05
    bin_low: float = -1.0
    bin_high: float = 1.0
    area_band: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not 0 < self.top_percent <= 100:
            raise DomainError(f"top_percent must lie in (0, 100], got {self.top_percent}")
        if self.alpha < 0 or self.beta < 0:
            raise DomainError("alpha and beta must be non-negative")
        if not 0 < self.accept_threshold <= 1:
            raise DomainError(f"accept_threshold must lie in (0, 1], got {self.accept_threshold}")
        for name in ("rewrites_per_design", "rules_per_pair", "reapply_attempts"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be at least 1")
        if self.bin_width <= 0 or self.bin_high <= self.bin_low:
            raise DomainError("entropy bins need a positive width and low < high")
        if self.area_band is not None:
            lo, hi = self.area_band
            if not 0 <= lo <= hi <= 100:
                raise DomainError(f"area_band must satisfy 0 <= low <= high <= 100, got {self.area_band}")

    @property
    def num_bins(self) -> int:
        return max(1, round((self.bin_high - self.bin_low) / self.bin_width))


# ---------------------------------------------------------------------------
# Arithmetic


def percentile(values: Sequence[float], p: float) -> float:
    """Linear-interpolated percentile (position ``p/100 * (n-1)`` in sorted order)."""
    if not values:
        raise DomainError("percentile of an empty sequence")
    ordered = sorted(values)
    pos = p / 100 * (len(ordered) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (ordered[hi] - ordered[lo]) * (pos - lo)


def mid_range(items: Sequence[tuple[RtlDesign, float]], band: tuple[float, float] = (25.0, 75.0)) -> list[RtlDesign]:
    """Designs whose area lies inside the percentile band (inclusive)."""
    if not items:
        return []
    areas = [a for _, a in items]
    lo, hi = percentile(areas, band[0]), percentile(areas, band[1])
    return [d for d, a in items if lo <= a <= hi]


def improvement_bin(value: float, cfg: LearningConfig = LearningConfig()) -> int:
    """Fixed-width bin of a signed relative improvement; out-of-range values land in the end bins."""
    index = math.floor(round((value - cfg.bin_low) / cfg.bin_width, 9))
    return min(max(index, 0), cfg.num_bins - 1)


def entropy_bits(improvements: Iterable[float], cfg: LearningConfig = LearningConfig()) -> float:
    counts = Counter(improvement_bin(x, cfg) for x in improvements)
    total = sum(counts.values())
    if total == 0 or len(counts) == 1:
        return 0.0
    return -math.fsum((c / total) * math.log2(c / total) for c in counts.values())


def signed_improvement(original: PpaMetrics, rewrite: PpaMetrics) -> float:
    base, value = original.scalar(), rewrite.scalar()
    if base <= 0:
        return 0.0 if value <= 0 else -1.0
    return (base - value) / base


def score_rewrite(ppa_n: float, ppa_o: float, ppa_i: float | None, equivalent: bool,
                  alpha: float = 0.25, beta: float = 0.5) -> float:
    """Equivalence-gated clipped score: ``alpha`` at no gain, ``alpha + beta`` at the optimized PPA."""
    if ppa_n - ppa_o < DEGENERATE_EPS * ppa_n or ppa_n - ppa_o <= 0:
        raise DegeneratePairError(f"pair gap {ppa_n - ppa_o!r} is too small to score against")
    if not equivalent or ppa_i is None:
        return 0.0
    value = alpha + beta * (ppa_n - ppa_i) / (ppa_n - ppa_o)
    return min(1.0, max(0.0, value))


def select_count(count: int, top_percent: float) -> int:
    return math.ceil(Fraction(str(top_percent)) * count / 100)


def select_designs(evaluated: Sequence[tuple[RtlDesign, float]], top_percent: float) -> list[RtlDesign]:
    """Top ``ceil(K% * count)`` designs by entropy; equal entropies go to the smaller design id."""
    if not evaluated:
        raise DomainError("nothing to select from")
    ranked = sorted(evaluated, key=lambda item: (-item[1], item[0].design_id))
    return [design for design, _ in ranked[: select_count(len(evaluated), top_percent)]]


# ---------------------------------------------------------------------------
# Pipeline stages


@dataclass(frozen=True)
class RewriteRecord:
    design_id: str
    verdict: EquivalenceVerdict
    ppa: PpaMetrics | None
    improvement: float | None

    def to_record(self) -> dict:
        return {
            "id": self.design_id,
            "verdict": self.verdict.status.value,
            "detail": self.verdict.detail,
            "ppa": self.ppa.to_dict() if self.ppa else None,
            "improvement": self.improvement,
        }


@dataclass
class DesignEvaluation:
    design: RtlDesign
    ppa: PpaMetrics
    entropy: float
    pairs: list[CodePair] = field(default_factory=list)
    rewrites: list[RewriteRecord] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "kind": "evaluation",
            "design": self.design.design_id,
            "ppa": self.ppa.to_dict(),
            "entropy": self.entropy,
            "pairs": [_pair_record(p) for p in self.pairs],
            "rewrites": [r.to_record() for r in self.rewrites],
        }


def _pair_record(pair: CodePair) -> dict:
    return {
        "pair_id": pair.pair_id,
        "non": {"id": pair.non_optimized.design_id, "source": pair.non_optimized.source, "ppa": pair.ppa_non.to_dict()},
        "opt": {"id": pair.optimized.design_id, "source": pair.optimized.source, "ppa": pair.ppa_opt.to_dict()},
        "relative_gain": pair.relative_gain,
    }


def _pair_from_record(data: dict) -> CodePair:
    non, opt = data["non"], data["opt"]
    return CodePair(
        RtlDesign(non["source"], non["id"]), RtlDesign(opt["source"], opt["id"]),
        PpaMetrics.from_dict(non["ppa"]), PpaMetrics.from_dict(opt["ppa"]), data["pair_id"],
    )


def explore(corpus: Sequence[RtlDesign], cfg: LearningConfig, tools: Toolchain) -> dict[str, list[RtlDesign]]:
    """Sample rewrites for every synthesizable design (after the optional mid-range area filter)."""
    kept = [d for d in corpus if check_synthesizable(d, tools.synthesizer)]
    for d in corpus:
        if d not in kept:
            log.warning("skipping %s: not synthesizable or not self-contained", d.design_id)
    if cfg.area_band is not None:
        measured = [(d, tools.measure(d)) for d in kept]
        kept = mid_range([(d, m.area) for d, m in measured if m is not None], cfg.area_band)
    rewrites: dict[str, list[RtlDesign]] = {}
    for design in kept:
        try:
            rewrites[design.design_id] = sample_rewrites(design, cfg.rewrites_per_design, tools.gateway)
        except ToolUnavailableError:
            raise
        except Exception as exc:  # one bad design must not sink the batch
            log.warning("exploration failed for %s: %s", design.design_id, exc)
    return rewrites


def evaluate_design(original: RtlDesign, rewrites: Sequence[RtlDesign], cfg: LearningConfig, tools: Toolchain) -> DesignEvaluation:
    ppa_orig = tools.measure(original)
    if ppa_orig is None:
        raise InputDesignError(f"{original.design_id} does not synthesize")
    results = tools.map(lambda rw: tools.evaluate(original, rw), rewrites)
    records: list[RewriteRecord] = []
    improvements: list[float] = []
    pairs: list[CodePair] = []
    for rewrite, (verdict, ppa) in zip(rewrites, results):
        gain = None
        if verdict.equivalent and ppa is not None:
            gain = signed_improvement(ppa_orig, ppa)
            improvements.append(gain)
            if max(ppa_orig.scalar(), ppa.scalar()) > 0 and relative_difference(ppa_orig, ppa) > cfg.pair_threshold:
                pair_id = f"{original.design_id}~{rewrite.design_id}"
                if ppa.scalar() < ppa_orig.scalar():
                    pairs.append(CodePair(original, rewrite, ppa_orig, ppa, pair_id))
                else:
                    pairs.append(CodePair(rewrite, original, ppa, ppa_orig, pair_id))
        records.append(RewriteRecord(rewrite.design_id, verdict, ppa, gain))
    return DesignEvaluation(original, ppa_orig, entropy_bits(improvements, cfg), pairs, records)


def induce_rules(pair: CodePair, cfg: LearningConfig, tools: Toolchain) -> list[RuleDraft]:
    variables = {
        "code": pair.non_optimized.source,
        "optimized_code": pair.optimized.source,
        "num_rules": str(cfg.rules_per_pair),
    }
    drafts = tools.gateway.rules(TemplateId.INDUCE, variables, cfg.rules_per_pair)
    return [RuleDraft(d.snippet, d.condition, d.action, pair.pair_id, i) for i, d in enumerate(drafts)]


@dataclass(frozen=True)
class RuleScore:
    mean: float
    attempts: tuple[float, ...]


def score_rule(draft: RuleDraft, pair: CodePair, cfg: LearningConfig, tools: Toolchain) -> RuleScore:
    """Mean score over ``reapply_attempts`` rule-guided optimizations of the non-optimized side."""
    ppa_n, ppa_o = pair.ppa_non.scalar(), pair.ppa_opt.scalar()
    request_vars = {"code": pair.non_optimized.source, "rules": draft.render()}
    scores = []
    for attempt in range(cfg.reapply_attempts):
        code = tools.gateway.code(TemplateId.OPTIMIZE, request_vars, sample=attempt)
        if code is None:
            scores.append(score_rewrite(ppa_n, ppa_o, None, False, cfg.alpha, cfg.beta))
            continue
        rewrite = RtlDesign(code, f"{pair.pair_id}.rule{draft.attempt}.try{attempt}")
        verdict, ppa = tools.evaluate(pair.non_optimized, rewrite)
        ppa_i = ppa.retarget(pair.ppa_non.target).scalar() if ppa is not None else None
        scores.append(score_rewrite(ppa_n, ppa_o, ppa_i, verdict.equivalent and ppa is not None, cfg.alpha, cfg.beta))
    return RuleScore(math.fsum(scores) / len(scores), tuple(scores))


# ---------------------------------------------------------------------------
# Orchestration


class Checkpoint:
    """Line-delimited progress log: finished design evaluations and finished pairs."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.evaluations: dict[str, dict] = {}
        self.pairs_done: set[str] = set()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec.get("kind") == "evaluation":
                    self.evaluations[rec["design"]] = rec
                elif rec.get("kind") == "pair_done":
                    self.pairs_done.add(rec["pair_id"])

    def _append(self, rec: dict) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def record_evaluation(self, rec: dict) -> None:
        self.evaluations[rec["design"]] = rec
        self._append(rec)

    def record_pair(self, pair_id: str, accepted: int) -> None:
        self.pairs_done.add(pair_id)
        self._append({"kind": "pair_done", "pair_id": pair_id, "accepted": accepted})


@dataclass
class LearnReport:
    corpus_size: int = 0
    explored: int = 0
    evaluated: list[dict] = field(default_factory=list)
    selected: list[str] = field(default_factory=list)
    pairs: int = 0
    drafts: int = 0
    accepted: int = 0
    rejected: int = 0
    rule_scores: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "kind": "learn_summary",
            "corpus": self.corpus_size,
            "explored": self.explored,
            "evaluated": len(self.evaluated),
            "selected": self.selected,
            "pairs": self.pairs,
            "drafts": self.drafts,
            "accepted": self.accepted,
            "rejected": self.rejected,
        }


def learn(corpus: Sequence[RtlDesign], cfg: LearningConfig, tools: Toolchain, library: RuleLibrary,
          checkpoint: Checkpoint | None = None) -> LearnReport:
    """Explore, evaluate, select, induce and score; accepted rules go to ``library``."""
    checkpoint = checkpoint or Checkpoint(None)
    report = LearnReport(corpus_size=len(corpus))
    by_id = {d.design_id: d for d in corpus}
    if len(by_id) != len(corpus):
        raise InputDesignError("design ids must be unique within a corpus")

    pending = [d for d in corpus if d.design_id not in checkpoint.evaluations]
    rewrites = explore(pending, cfg, tools) if pending else {}
    report.explored = len(rewrites)
    for design in pending:
        if design.design_id not in rewrites:
            continue
        evaluation = evaluate_design(design, rewrites[design.design_id], cfg, tools)
        checkpoint.record_evaluation(evaluation.to_record())

    records = [checkpoint.evaluations[d.design_id] for d in corpus if d.design_id in checkpoint.evaluations]
    report.evaluated = records
    if not records:
        return report
    selected = select_designs([(by_id[r["design"]], r["entropy"]) for r in records], cfg.top_percent)
    report.selected = [d.design_id for d in selected]

    for design in selected:
        for pair_data in checkpoint.evaluations[design.design_id]["pairs"]:
            pair = _pair_from_record(pair_data)
            report.pairs += 1
            if pair.pair_id in checkpoint.pairs_done:
                continue
            accepted = 0
            drafts = induce_rules(pair, cfg, tools)
            report.drafts += len(drafts)
            for draft in drafts:
                try:
                    result = score_rule(draft, pair, cfg, tools)
                except DegeneratePairError as exc:
                    log.warning("skipping pair %s: %s", pair.pair_id, exc)
                    break
                report.rule_scores.append({"pair_id": pair.pair_id, "draft": draft.attempt,
                                           "score": result.mean, "attempts": list(result.attempts)})
                try:
                    library.add_rule(Rule.from_draft(draft, result.mean))
                    accepted += 1
                except RuleRejectedError:
                    report.rejected += 1
            report.accepted += accepted
            checkpoint.record_pair(pair.pair_id, accepted)
    return report


__all__ = [
    "Checkpoint",
    "DesignEvaluation",
    "LearnReport",
    "LearningConfig",
    "RuleScore",
    "entropy_bits",
    "evaluate_design",
    "explore",
    "improvement_bin",
    "induce_rules",
    "learn",
    "mid_range",
    "percentile",
    "score_rewrite",
    "score_rule",
    "select_designs",
]
