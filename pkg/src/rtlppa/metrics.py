"""Expected best improvement among k of n samples, and its mean over circuits."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import DomainError


@dataclass(frozen=True)
class SampleSet:
    circuit_id: str
    improvements: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "improvements", tuple(float(x) for x in self.improvements))
        if not self.improvements:
            raise DomainError(f"{self.circuit_id}: at least one sample is required")
        for x in self.improvements:
            if not 0.0 <= x <= 1.0:
                raise DomainError(f"{self.circuit_id}: improvement {x} outside [0, 1]")

    @property
    def n(self) -> int:
        return len(self.improvements)


def subset_weights(n: int, k: int) -> list[Fraction]:
    """``C(n-j, k-1) / C(n, k)`` for j = 1..n, built by exact ratio updates."""
    if not 1 <= k <= n:
        raise DomainError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")
    weights = []
    w = Fraction(k, n)  # j = 1: C(n-1, k-1) / C(n, k)
    for j in range(1, n + 1):
        weights.append(w)
        # C(n-j-1, k-1) / C(n-j, k-1) = (n-j-k+1) / (n-j)
        if n - j > 0:
            w = w * Fraction(n - j - k + 1, n - j) if n - j - k + 1 > 0 else Fraction(0)
        else:
            w = Fraction(0)
    return weights


def impr_at_k(samples: SampleSet | Sequence[float], k: int) -> float:
    """Unbiased estimate of the best improvement among ``k`` draws from the ``n`` samples."""
    values = samples.improvements if isinstance(samples, SampleSet) else tuple(float(x) for x in samples)
    ordered = sorted(values, reverse=True)
    weights = subset_weights(len(ordered), k)
    total = sum((Fraction(v) * w for v, w in zip(ordered, weights) if w), Fraction(0))
    return float(total)


def aggregate(circuits: Sequence[SampleSet], k: int) -> float:
    """Unweighted mean of per-circuit estimates."""
    if not circuits:
        raise DomainError("no circuits to aggregate")
    return float(sum((Fraction(impr_at_k(c, k)) for c in circuits), Fraction(0)) / len(circuits))


__all__ = ["SampleSet", "aggregate", "impr_at_k", "subset_weights"]
