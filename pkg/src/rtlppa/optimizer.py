"""Rule-guided optimization of one design: speculate, retrieve, adapt, optimize, inside a beam search."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

from .errors import DomainError, EmptyLibraryError, InputDesignError
from .library import RuleLibrary
from .llm import TemplateId, extract_code, render_rules
from .model import Candidate, PpaMetrics, RtlDesign, SearchConfig, improvement
from .textsim import fitted_vectors, sparse_cosine
from .toolchain import Toolchain
from .verilog import extract_interface

log = logging.getLogger(__name__)

RETRIEVE_TOP_K = 3


@dataclass(frozen=True)
class SpeculatedRule:
    snippet: str
    condition: str
    action: str
    fallback: bool = False


def speculate(target: RtlDesign, tools: Toolchain) -> SpeculatedRule:
    """One rule guessed for ``target``; falls back to its interface summary when nothing parses."""
    drafts = tools.gateway.rules(TemplateId.SPECULATE, {"code": target.source}, 1)
    if drafts:
        d = drafts[0]
        return SpeculatedRule(d.snippet, d.condition, d.action)
    try:
        summary = extract_interface(target).summary()
    except Exception:
        summary = target.design_id
    return SpeculatedRule(target.source, summary, f"reduce {tools.target.value}", fallback=True)


def diversity_score(candidate_source: str, ancestor_sources: Sequence[str]) -> float:
    """One minus the largest TF-IDF cosine against any ancestor; idf fitted over candidate and ancestors."""
    if not ancestor_sources:
        raise DomainError("diversity needs at least one ancestor")
    vectors = fitted_vectors([candidate_source, *ancestor_sources])
    head = vectors[0]
    similarity = max(sparse_cosine(head, v) for v in vectors[1:])
    return min(1.0, max(0.0, 1.0 - similarity))


def ppa_score(root_ppa: float, candidate_ppa: float | None, equivalent: bool) -> float:
    """0 unless equivalent; 0.5 at parity with the root, 1.0 at zero cost, clipped to [0, 1]."""
    if root_ppa <= 0:
        raise DomainError(f"root PPA must be positive, got {root_ppa}")
    if not equivalent or candidate_ppa is None:
        return 0.0
    return min(1.0, max(0.0, 0.5 + 0.5 * (root_ppa - candidate_ppa) / root_ppa))


def composite_score(diversity: float, ppa: float, omega: float = 0.25) -> float:
    if not 0.0 <= omega <= 1.0:
        raise DomainError(f"omega must lie in [0, 1], got {omega}")
    return omega * diversity + (1.0 - omega) * ppa


def rank_key(candidate: Candidate) -> tuple:
    """Beam order: higher score, then lower target PPA, then smaller source hash, then older id."""
    scalar = candidate.ppa.scalar() if candidate.ppa is not None else float("inf")
    return (-candidate.score, scalar, candidate.design.digest, candidate.cand_id)


def select_beam(pool: Sequence[Candidate], k: int) -> list[Candidate]:
    return sorted(pool, key=rank_key)[:k]


@dataclass
class SearchResult:
    best: Candidate
    archive: list[Candidate]
    steps: list[dict]
    generations: int
    budget: int
    root_ppa: PpaMetrics

    def best_improvement_by_step(self) -> list[float]:
        return [s["best_improvement"] for s in self.steps]


@dataclass
class BeamSearch:
    """Diversity-aware beam search over rule-guided rewrites of one design.

    Every variant is checked against the root design. Variants that are not
    equivalent, or do not synthesize, stay in the archive but never enter the
    pool. Duplicate sources keep only their earliest candidate.
    """

    original: RtlDesign
    config: SearchConfig
    tools: Toolchain
    library: RuleLibrary | None = None
    archive: list[Candidate] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    generations: int = 0

    def __post_init__(self) -> None:
        self._by_id: dict[int, Candidate] = {}
        self._seen: set[str] = set()
        self.root: Candidate | None = None

    # helpers ----------------------------------------------------------------

    def _add(self, cand: Candidate) -> Candidate:
        self.archive.append(cand)
        self._by_id[cand.cand_id] = cand
        return cand

    def ancestors(self, cand: Candidate) -> list[str]:
        """Sources from the root down to ``cand``'s parent; the root uses itself."""
        chain = []
        node = cand
        while node.parent_id is not None:
            node = self._by_id[node.parent_id]
            chain.append(node.design.source)
        return list(reversed(chain)) or [cand.design.source]

    def _score(self, cand: Candidate) -> Candidate:
        root_ppa = self.root.ppa.scalar() if self.root is not None else cand.ppa.scalar()
        div = diversity_score(cand.design.source, self.ancestors(cand))
        scalar = cand.ppa.scalar() if cand.ppa is not None else None
        pscore = ppa_score(root_ppa, scalar, cand.verdict.equivalent)
        return replace(cand, diversity=div, ppa_score=pscore,
                       score=composite_score(div, pscore, self.config.diversity_weight))

    # single expansion -------------------------------------------------------

    def guidance(self, target: Candidate) -> str | None:
        """Adapted rule text for ``target``, or ``None`` to optimize without rules."""
        guess = speculate(target.design, self.tools)
        if self.library is None:
            return None
        try:
            retrieved = self.library.retrieve(guess.condition, guess.action, RETRIEVE_TOP_K)
        except EmptyLibraryError:
            log.warning("rule library is empty; optimizing without rules")
            return None
        text = render_rules(retrieved)
        adapted = self.tools.gateway.rules(TemplateId.ADAPT, {"code": target.design.source, "rules": text, "speculated_condition": guess.condition}, len(retrieved))
        return render_rules(adapted) if adapted else text

    def expand(self, target: Candidate, m: int, step: int) -> list[Candidate]:
        """``m`` optimize generations from ``target``; unextractable ones leave no record."""
        if not target.verdict.equivalent:
            raise DomainError("only equivalent candidates are expanded")
        rules = self.guidance(target)
        gateway = self.tools.gateway
        if rules is None:
            request = gateway.request(TemplateId.OPTIMIZE, {"code": target.design.source}, variant="norules")
        else:
            request = gateway.request(TemplateId.OPTIMIZE, {"code": target.design.source, "rules": rules})
        bodies = gateway.map_samples(request, extract_code, range(m))
        self.generations += m
        root = self.root.design
        designs = []
        for body in bodies:
            if body is None:
                continue
            cid = len(self.archive) + len(designs)
            designs.append(RtlDesign(body, f"{self.original.design_id}#c{cid}", self.original.top_module))
        results = self.tools.map(lambda d: self.tools.evaluate(root, d), designs)
        out = []
        for design, (verdict, ppa) in zip(designs, results):
            cid = len(self.archive)
            note = ""
            if verdict.equivalent and ppa is None:
                note = "synthesis failed"
            eligible = verdict.equivalent and ppa is not None
            if eligible and design.digest in self._seen:
                eligible = False
                note = "duplicate source"
            cand = Candidate(cid, design, target.cand_id, target.depth + 1, verdict, ppa, step=step,
                             eligible=eligible, note=note,
                             improvement=improvement(self.root.ppa, ppa, verdict) if ppa is not None else 0.0)
            cand = self._score(cand) if eligible else cand
            if eligible:
                self._seen.add(design.digest)
            out.append(self._add(cand))
        return out

    # search -----------------------------------------------------------------

    def start(self) -> Candidate:
        verdict = self.tools.equivalence(self.original, self.original)
        if not verdict.equivalent:
            raise InputDesignError(f"original fails its self-equivalence check: {verdict.detail}")
        ppa = self.tools.measure(self.original)
        if ppa is None:
            raise InputDesignError("original does not synthesize")
        if ppa.scalar() <= 0:
            raise InputDesignError(f"original {ppa.target.value} is {ppa.scalar()}; nothing to improve")
        root = Candidate(0, self.original, None, 0, verdict, ppa, eligible=True, note="root")
        self.root = root
        self._by_id[0] = root
        root = self._score(root)
        self.root = root
        self._seen.add(self.original.digest)
        return self._add(root)

    def run(self) -> SearchResult:
        cfg = self.config
        budget = cfg.budget
        beam = [self.start()]
        best = beam[0]
        for step in range(1, cfg.max_steps + 1):
            targets = beam if step > 1 else beam[:1]
            new: list[Candidate] = []
            for target in targets:
                room = budget - self.generations
                if room <= 0:
                    break
                new.extend(self.expand(target, min(cfg.num_expand, room), step))
            pool = list(beam) + [c for c in new if c.eligible]
            beam = select_beam(pool, cfg.beam_width)
            for cand in new:
                if cand.eligible and (cand.improvement, -cand.cand_id) > (best.improvement, -best.cand_id):
                    best = cand
            self.steps.append({
                "kind": "step",
                "step": step,
                "beam": [c.cand_id for c in beam],
                "scores": [c.score for c in beam],
                "new": [c.cand_id for c in new],
                "generations": self.generations,
                "best_id": best.cand_id,
                "best_improvement": best.improvement,
            })
            if self.generations >= budget:
                break
        return SearchResult(best, list(self.archive), list(self.steps), self.generations, budget, self.root.ppa)


def beam_search(original: RtlDesign, config: SearchConfig, library: RuleLibrary | None, tools: Toolchain) -> SearchResult:
    return BeamSearch(original, config, tools, library).run()


def arao_step(search: BeamSearch, target: Candidate, m: int, step: int = 1) -> list[Candidate]:
    """Speculate, retrieve, adapt, then ``m`` optimize generations from ``target``."""
    return search.expand(target, m, step)


def write_archive(result: SearchResult, config: SearchConfig, stream: IO[str], *, design_id: str = "") -> None:
    """Line-delimited run log: header, candidates, per-step beams, summary."""
    header = {
        "kind": "run",
        "design": design_id,
        "config": config.label,
        "beam_width": config.beam_width,
        "num_expand": config.num_expand,
        "max_steps": config.max_steps,
        "diversity_weight": config.diversity_weight,
        "budget": result.budget,
        "root_ppa": result.root_ppa.to_dict(),
    }
    stream.write(json.dumps(header, sort_keys=True) + "\n")
    for cand in result.archive:
        stream.write(json.dumps(cand.to_record(), sort_keys=True) + "\n")
    for step in result.steps:
        stream.write(json.dumps(step, sort_keys=True) + "\n")
    summary = {
        "kind": "summary",
        "generations": result.generations,
        "budget": result.budget,
        "best_id": result.best.cand_id,
        "best_improvement": result.best.improvement,
        "best_ppa": result.best.ppa.to_dict() if result.best.ppa else None,
    }
    stream.write(json.dumps(summary, sort_keys=True) + "\n")


def sample_improvements(records: Sequence[dict]) -> list[float]:
    """Per-generation improvements from archive records, root excluded, failures as zeros.

    Unextractable generations leave no candidate record, so they are padded
    with zeros up to the run's generation count.
    """
    generations = next((r["generations"] for r in records if r.get("kind") == "summary"), None)
    values = [float(r["improvement"]) for r in records
              if r.get("kind") == "candidate" and r.get("parent") is not None]
    if generations is not None and generations > len(values):
        values += [0.0] * (generations - len(values))
    return values


__all__ = [
    "BeamSearch",
    "SearchResult",
    "SpeculatedRule",
    "arao_step",
    "beam_search",
    "composite_score",
    "diversity_score",
    "ppa_score",
    "rank_key",
    "select_beam",
    "speculate",
    "write_archive",
    "sample_improvements",
]

