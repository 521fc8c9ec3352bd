"""Learn PPA optimization rules from verified RTL rewrites and apply them with a diversity-aware beam search."""

from __future__ import annotations

from .model import (
    Candidate,
    CodePair,
    EquivalenceVerdict,
    Metric,
    PpaMetrics,
    RtlDesign,
    Rule,
    RuleDraft,
    SearchConfig,
    Verdict,
    improvement,
    relative_difference,
    total_budget,
)

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "CodePair",
    "EquivalenceVerdict",
    "Metric",
    "PpaMetrics",
    "RtlDesign",
    "Rule",
    "RuleDraft",
    "SearchConfig",
    "Verdict",
    "improvement",
    "relative_difference",
    "total_budget",
]
