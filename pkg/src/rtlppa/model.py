"""Domain types shared by every stage, plus the PPA and improvement arithmetic."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

from .errors import DomainError


class Metric(str, enum.Enum):
    AREA = "area"
    DELAY = "delay"
    POWER = "power"

    @classmethod
    def parse(cls, value: "str | Metric") -> "Metric":
        if isinstance(value, Metric):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown target metric {value!r}; expected area, delay or power") from None


@dataclass(frozen=True)
class PpaMetrics:
    """Post-synthesis area (um^2), delay (ns) and power (mW), with the optimized scalar selected by ``target``."""

    area: float
    delay: float
    power: float
    target: Metric = Metric.AREA

    def __post_init__(self) -> None:
        object.__setattr__(self, "target", Metric.parse(self.target))
        for name in ("area", "delay", "power"):
            value = getattr(self, name)
            if value < 0:
                raise DomainError(f"{name} must be non-negative, got {value}")

    def scalar(self) -> float:
        return getattr(self, self.target.value)

    def retarget(self, target: "Metric | str") -> "PpaMetrics":
        return PpaMetrics(self.area, self.delay, self.power, Metric.parse(target))

    def to_dict(self) -> dict:
        return {"area": self.area, "delay": self.delay, "power": self.power, "target": self.target.value}

    @classmethod
    def from_dict(cls, data: dict) -> "PpaMetrics":
        return cls(float(data["area"]), float(data["delay"]), float(data["power"]), Metric.parse(data["target"]))


@dataclass(frozen=True)
class RtlDesign:
    source: str
    design_id: str
    top_module: str | None = None

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise DomainError(f"design {self.design_id!r} has empty source")

    @property
    def digest(self) -> str:
        return source_digest(self.source)


def source_digest(source: str) -> str:
    """SHA-256 of the source with line endings unified and trailing whitespace dropped."""
    lines = source.replace("\r\n", "\n").split("\n")
    canonical = "\n".join(line.rstrip() for line in lines).strip("\n")
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Verdict(str, enum.Enum):
    EQUIVALENT = "equivalent"
    INEQUIVALENT = "inequivalent"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class EquivalenceVerdict:
    status: Verdict
    detail: str = ""
    coverage: float | None = None

    @property
    def equivalent(self) -> bool:
        return self.status is Verdict.EQUIVALENT

    @classmethod
    def passed(cls, detail: str = "PASS", coverage: float | None = None) -> "EquivalenceVerdict":
        return cls(Verdict.EQUIVALENT, detail, coverage)

    @classmethod
    def inequivalent(cls, detail: str) -> "EquivalenceVerdict":
        return cls(Verdict.INEQUIVALENT, detail)

    @classmethod
    def inconclusive(cls, detail: str) -> "EquivalenceVerdict":
        return cls(Verdict.INCONCLUSIVE, detail)


@dataclass(frozen=True)
class CodePair:
    """Verified-equivalent (non-optimized, optimized) designs with their PPA labels."""

    non_optimized: RtlDesign
    optimized: RtlDesign
    ppa_non: PpaMetrics
    ppa_opt: PpaMetrics
    pair_id: str = ""

    def __post_init__(self) -> None:
        if self.ppa_non.target is not self.ppa_opt.target:
            raise DomainError("pair metrics must share one target")
        if not self.ppa_opt.scalar() < self.ppa_non.scalar():
            raise DomainError("optimized side must have the lower target scalar")

    @property
    def relative_gain(self) -> float:
        return relative_difference(self.ppa_non, self.ppa_opt)


@dataclass(frozen=True)
class RuleDraft:
    """An induced (snippet, condition, action) triple that has not been scored yet."""

    snippet: str
    condition: str
    action: str
    pair_id: str = ""
    attempt: int = 0

    def render(self) -> str:
        return f"[SNIPPET]\n{self.snippet}\n[CONDITION]\n{self.condition}\n[ACTION]\n{self.action}"


@dataclass(frozen=True)
class Rule:
    snippet: str
    condition: str
    action: str
    score: float
    embedding: tuple[float, ...] = ()
    pair_id: str = ""
    attempt: int = 0
    rule_id: int | None = None

    def __post_init__(self) -> None:
        for name in ("snippet", "condition", "action"):
            if not getattr(self, name).strip():
                raise DomainError(f"rule {name} must be non-empty")
        if not 0.0 <= self.score <= 1.0:
            raise DomainError(f"rule score must lie in [0, 1], got {self.score}")

    @classmethod
    def from_draft(cls, draft: RuleDraft, score: float) -> "Rule":
        return cls(draft.snippet, draft.condition, draft.action, score, (), draft.pair_id, draft.attempt)

    @property
    def retrieval_text(self) -> str:
        return retrieval_text(self.condition, self.action)

    def render(self) -> str:
        return f"[SNIPPET]\n{self.snippet}\n[CONDITION]\n{self.condition}\n[ACTION]\n{self.action}"


RETRIEVAL_SEPARATOR = "\n[SEP]\n"


def retrieval_text(condition: str, action: str) -> str:
    """Text embedded for retrieval: condition and action joined by a separator token."""
    return f"{condition}{RETRIEVAL_SEPARATOR}{action}"


@dataclass(frozen=True)
class SearchConfig:
    beam_width: int = 2
    num_expand: int = 3
    max_steps: int = 3
    diversity_weight: float = 0.25
    pair_threshold: float = 0.05

    def __post_init__(self) -> None:
        for name in ("beam_width", "num_expand", "max_steps"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 <= self.diversity_weight <= 1.0:
            raise DomainError(f"diversity_weight must lie in [0, 1], got {self.diversity_weight}")

    @property
    def budget(self) -> int:
        return total_budget(self)

    @property
    def label(self) -> str:
        return f"{self.beam_width}-{self.num_expand}-{self.max_steps}"


@dataclass(frozen=True)
class Candidate:
    cand_id: int
    design: RtlDesign
    parent_id: int | None
    depth: int
    verdict: EquivalenceVerdict
    ppa: PpaMetrics | None = None
    score: float = 0.0
    improvement: float = 0.0
    eligible: bool = False
    step: int = 0
    diversity: float = 0.0
    ppa_score: float = 0.0
    note: str = ""

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise DomainError("depth must be non-negative")
        if (self.depth == 0) != (self.parent_id is None):
            raise DomainError("depth is 0 exactly when the candidate has no parent")

    def to_record(self) -> dict:
        return {
            "kind": "candidate",
            "id": self.cand_id,
            "parent": self.parent_id,
            "depth": self.depth,
            "step": self.step,
            "verdict": self.verdict.status.value,
            "detail": self.verdict.detail,
            "ppa": self.ppa.to_dict() if self.ppa else None,
            "diversity": self.diversity,
            "ppa_score": self.ppa_score,
            "score": self.score,
            "improvement": self.improvement,
            "eligible": self.eligible,
            "digest": self.design.digest,
            "note": self.note,
            "source": self.design.source,
        }


def _same_target(a: PpaMetrics, b: PpaMetrics) -> None:
    if a.target is not b.target:
        raise DomainError(f"metrics target different scalars ({a.target.value} vs {b.target.value})")


def improvement(original: PpaMetrics, candidate: PpaMetrics | None, verdict: EquivalenceVerdict) -> float:
    """``1 - candidate/original`` for equivalent strict improvements, else 0."""
    if original.scalar() <= 0:
        raise DomainError(f"original target scalar must be positive, got {original.scalar()}")
    if candidate is None or not verdict.equivalent:
        return 0.0
    _same_target(original, candidate)
    if candidate.scalar() >= original.scalar():
        return 0.0
    # same value as 1 - c/o, with one rounding instead of two
    return (original.scalar() - candidate.scalar()) / original.scalar()


def relative_difference(a: PpaMetrics, b: PpaMetrics) -> float:
    _same_target(a, b)
    x, y = a.scalar(), b.scalar()
    denom = max(x, y)
    if denom <= 0:
        raise DomainError("relative difference undefined when both scalars are zero")
    return abs(x - y) / denom


def total_budget(config: SearchConfig) -> int:
    """Optimize-generations of a full run: ``(1 + k*(s-1)) * m``."""
    k, m, s = config.beam_width, config.num_expand, config.max_steps
    return (1 + k * (s - 1)) * m


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
    "retrieval_text",
    "source_digest",
    "total_budget",
]
