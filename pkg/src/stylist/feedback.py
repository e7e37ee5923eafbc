"""The threshold-gated negative-feedback loop.

One controller serves all three levels of the pipeline: garment search
(item level), expert escalation (outfit level), and try-on regeneration.
Each iteration generates a value, scores it, and either stops at the
threshold or asks a diagnoser for corrective phrases that feed the next
attempt.  The loop always returns its best attempt, never the last one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

from .domain import NegativePromptSet
from .errors import GeneratorFailedError

logger = logging.getLogger(__name__)

Generate = Callable[[NegativePromptSet], tuple[Any, float]]
Diagnose = Callable[[Any], NegativePromptSet]


@dataclass(frozen=True)
class LoopConfig:
    """Gate and budget for one feedback loop."""

    threshold: float
    max_iterations: int
    diagnoser_backend: str = ""

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def with_threshold(self, threshold: float) -> "LoopConfig":
        return LoopConfig(threshold, self.max_iterations, self.diagnoser_backend)


@dataclass(frozen=True)
class LoopOutcome:
    """What a loop run produced: the best attempt and its history."""

    best_value: Any
    best_score: float
    iterations_used: int
    satisfied: bool
    negatives: NegativePromptSet = field(default_factory=NegativePromptSet)


def merge_negatives(
    existing: NegativePromptSet, incoming: NegativePromptSet
) -> NegativePromptSet:
    """Order-preserving union; incoming duplicates (case-insensitive on the
    negative phrase) are dropped."""
    return existing.merged(incoming)


def run_feedback_loop(
    generate: Generate, diagnose: Diagnose, config: LoopConfig
) -> LoopOutcome:
    """Run generate/score/gate/diagnose until the gate passes or the budget
    runs out.

    Iteration 1 always runs with an empty negative set.  After a failing
    iteration that is not the last, the diagnoser critiques that
    iteration's value and its phrases are merged into the set for the next
    attempt.  A diagnoser failure is logged and skipped; a generator
    failure aborts with the partial outcome attached to the error.
    """
    negatives = NegativePromptSet()
    best_value: Any = None
    best_score = float("-inf")
    completed = 0

    for iteration in range(1, config.max_iterations + 1):
        try:
            value, score = generate(negatives)
        except Exception as exc:
            partial = None
            if completed:
                partial = LoopOutcome(
                    best_value=best_value,
                    best_score=best_score,
                    iterations_used=completed,
                    satisfied=best_score >= config.threshold,
                    negatives=negatives,
                )
            raise GeneratorFailedError(iteration, partial, exc) from exc
        completed = iteration
        if score > best_score:
            best_value, best_score = value, score
        if score >= config.threshold:
            break
        if iteration < config.max_iterations:
            try:
                incoming = diagnose(value)
            except Exception:
                logger.warning(
                    "diagnoser failed on iteration %d; continuing with "
                    "unchanged negatives",
                    iteration,
                    exc_info=True,
                )
            else:
                negatives = merge_negatives(negatives, incoming)

    return LoopOutcome(
        best_value=best_value,
        best_score=best_score,
        iterations_used=completed,
        satisfied=best_score >= config.threshold,
        negatives=negatives,
    )
