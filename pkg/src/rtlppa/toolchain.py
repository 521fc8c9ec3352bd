"""The adapters a pipeline needs, bundled with the evaluate-one-rewrite step."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, TypeVar

from .equiv import StimulusConfig, check_equivalence
from .errors import ReportParseError, VerilogParseError
from .llm import LlmGateway
from .model import EquivalenceVerdict, Metric, PpaMetrics, RtlDesign
from .synthesis import SynthesisAdapter, SynthesisConstraints, synthesize

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class Toolchain:
    gateway: LlmGateway
    synthesizer: SynthesisAdapter
    simulator: object
    stimulus: StimulusConfig = field(default_factory=StimulusConfig)
    constraints: SynthesisConstraints = field(default_factory=SynthesisConstraints)
    sim_timeout: float = 300.0
    artifacts_dir: Path | None = None
    workers: int = 1

    @property
    def target(self) -> Metric:
        return self.constraints.target

    def equivalence(self, original: RtlDesign, rewrite: RtlDesign) -> EquivalenceVerdict:
        artifacts = None
        if self.artifacts_dir is not None:
            artifacts = Path(self.artifacts_dir) / "equiv"
        return check_equivalence(original, rewrite, self.stimulus, self.simulator,
                                 timeout=self.sim_timeout, artifacts_dir=artifacts)

    def measure(self, design: RtlDesign) -> PpaMetrics | None:
        """PPA of ``design``, or ``None`` when it does not synthesize."""
        try:
            return synthesize(design, self.constraints, self.synthesizer)
        except (VerilogParseError, ReportParseError) as exc:
            log.info("synthesis failed for %s: %s", design.design_id, exc)
            return None

    def evaluate(self, original: RtlDesign, rewrite: RtlDesign) -> tuple[EquivalenceVerdict, PpaMetrics | None]:
        """Verdict against ``original``; PPA only for equivalent rewrites."""
        verdict = self.equivalence(original, rewrite)
        if not verdict.equivalent:
            return verdict, None
        return verdict, self.measure(rewrite)

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Order-preserving map over a worker pool of size ``workers``."""
        items = list(items)
        if self.workers <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(fn, items))
