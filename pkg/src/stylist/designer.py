"""Outfit planning and garment acquisition.

A ranked pool of VLM experts turns the user request into a garment spec
sheet; each listed garment is then bought through image search inside an
item-level feedback loop; the resulting outfit is gated on the clamped
geometric mean of its alignment scores.  A failing outfit escalates to
the next expert with every rejected sheet serialized as negative context.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .domain import (
    GarmentCandidate,
    GarmentCategory,
    GarmentDescription,
    GarmentSpecSheet,
    NegativePromptSet,
    OutfitProposal,
    SelectedGarment,
    UserRequest,
    parse_prompt_pairs,
    parse_spec_sheet,
    validate_candidate_link,
)
from .errors import (
    AllExpertsFailedError,
    BackendUnavailableError,
    GeneratorFailedError,
    InvalidImageError,
    InvalidUrlError,
    MalformedJsonError,
    NoCandidatesError,
    SchemaViolationError,
    SpecSheetParseError,
    StylistError,
    ZeroScoreError,
)
from .feedback import LoopConfig, run_feedback_loop
from .ports.base import BackendSet
from .prompts import render_prompt

logger = logging.getLogger(__name__)

#: Per-category alignment gates for the item loop.
DEFAULT_TAU: Mapping[GarmentCategory, float] = {
    GarmentCategory.UPPER_BODY: 0.7,
    GarmentCategory.LOWER_BODY: 0.7,
    GarmentCategory.DRESS: 0.7,
    GarmentCategory.SHOES: 0.6,
    GarmentCategory.HAT: 0.6,
    GarmentCategory.GLASSES: 0.6,
    GarmentCategory.BELT: 0.6,
    GarmentCategory.SCARF: 0.6,
}

DEFAULT_OMEGA = 0.65
DEFAULT_SEARCH_NUM = 10
DEFAULT_EXPERT_WEIGHTS = (0.4, 0.3, 0.2, 0.1)

#: One-off classification deciding which try-on edit prompt fits the
#: garment photo.  Not a registry template: it is selection plumbing, not
#: part of the shipped prompt set.
PRESENCE_PROMPT = (
    "Look at this product photo. Is a person or human model wearing the "
    "garment? Answer with exactly one word: yes or no."
)


@dataclass(frozen=True)
class Expert:
    backend_id: str
    weight: float

    def __post_init__(self) -> None:
        if not self.backend_id:
            raise ValueError("expert backend_id must be non-empty")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"expert weight {self.weight} outside [0, 1]")


@dataclass(frozen=True)
class ExpertPool:
    """Capability-ranked VLM experts; weights feed the cost model only."""

    experts: tuple[Expert, ...]

    def __post_init__(self) -> None:
        if not self.experts:
            raise ValueError("expert pool is empty")
        total = sum(e.weight for e in self.experts)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"expert weights sum to {total}, expected 1")

    @classmethod
    def from_backend_ids(
        cls, backend_ids: Sequence[str], weights: Sequence[float] | None = None
    ) -> "ExpertPool":
        if weights is None:
            weights = DEFAULT_EXPERT_WEIGHTS[: len(backend_ids)]
        if len(weights) != len(backend_ids):
            raise ValueError("one weight per expert required")
        return cls(tuple(Expert(b, w) for b, w in zip(backend_ids, weights)))


@dataclass(frozen=True)
class DesignerConfig:
    tau: Mapping[GarmentCategory, float] = field(
        default_factory=lambda: dict(DEFAULT_TAU)
    )
    omega: float = DEFAULT_OMEGA
    item_loop: LoopConfig = field(default_factory=lambda: LoopConfig(0.7, 3))
    search_num: int = DEFAULT_SEARCH_NUM
    presence_backend: str = ""

    def __post_init__(self) -> None:
        if not 0.0 < self.omega <= 1.0:
            raise ValueError(f"omega {self.omega} outside (0, 1]")
        if not 1 <= self.search_num <= 10:
            raise ValueError(f"search_num {self.search_num} outside 1..10")
        for cat, tau in self.tau.items():
            if not 0.0 < tau <= 1.0:
                raise ValueError(f"tau[{cat.value}] = {tau} outside (0, 1]")

    def threshold_for(self, category: GarmentCategory) -> float:
        if category not in self.tau:
            raise ValueError(f"no tau threshold for {category.value}")
        return self.tau[category]

    def presence_backend_id(self) -> str:
        return self.presence_backend or self.item_loop.diagnoser_backend


def interpret_style(
    backends: BackendSet,
    request: UserRequest,
    expert: str,
    rejected: Sequence[GarmentSpecSheet],
    *,
    expert_index: int | None = None,
    phase: str = "designer",
) -> GarmentSpecSheet:
    """Ask one expert for a spec sheet, feeding it earlier rejections.

    The first expert renders the plain template; later experts get every
    rejected sheet serialized (in its original wire shape) as negative
    examples.  The reply is parsed fence-tolerantly; on a parse failure
    one reparse of the fence-stripped text is attempted before the error
    surfaces as SpecSheetParseError.
    """
    if rejected:
        prompt = render_prompt(
            "interpreter_retry",
            {
                "user clothing description": request.preference_text,
                "negative examples": json.dumps(
                    [sheet.to_sheet_json() for sheet in rejected],
                    ensure_ascii=False,
                ),
            },
        )
    else:
        prompt = render_prompt(
            "interpreter_first",
            {"user clothing description": request.preference_text},
        )
    reply = backends.vlm_chat(
        expert,
        "",
        prompt,
        images=[request.user_image],
        phase=phase,
        context=expert,
    )
    index = expert_index if expert_index is not None else len(rejected) + 1
    try:
        return parse_spec_sheet(reply, expert_index=index)
    except MalformedJsonError:
        stripped = _strip_fences(reply)
        try:
            return parse_spec_sheet(stripped, expert_index=index)
        except (MalformedJsonError, SchemaViolationError) as exc:
            raise SpecSheetParseError(f"expert {expert}: {exc}") from exc
    except SchemaViolationError as exc:
        raise SpecSheetParseError(f"expert {expert}: {exc}") from exc


def _strip_fences(text: str) -> str:
    lines = [ln for ln in text.splitlines() if not ln.lstrip().startswith("```")]
    return "\n".join(lines)


def build_search_query(description: str, negatives: NegativePromptSet) -> str:
    """Description plus one provider negation term per negative phrase.

    Positives are not appended; the description already states the
    intent.
    """
    if not description.strip():
        raise ValueError("search description must be non-empty")
    parts = [description]
    parts.extend(f'-"{phrase}"' for phrase in negatives.negatives)
    return " ".join(parts)


def _normalize_image_url(url: str) -> str:
    try:
        return validate_candidate_link(url)
    except InvalidUrlError:
        # Scenario image refs are not URLs; compare them verbatim.
        return url.strip()


def acquire_garment(
    backends: BackendSet,
    category: GarmentCategory,
    description: GarmentDescription,
    config: DesignerConfig,
    *,
    phase: str = "designer",
) -> SelectedGarment:
    """Search, score, and select one garment inside the item loop.

    Each iteration searches with the accumulated negation terms, downloads
    the (URL-deduplicated) hits, scores each against the description, and
    keeps the argmax; below-threshold winners are critiqued by the search
    diagnoser.  Candidates that fail to download are skipped.  A round
    with no usable candidate aborts the loop; if an earlier round produced
    one, that best-so-far garment is returned, otherwise NoCandidates.
    """
    threshold = config.threshold_for(category)
    loop_config = config.item_loop.with_threshold(threshold)

    def generate(negatives: NegativePromptSet) -> tuple[GarmentCandidate, float]:
        query = build_search_query(description.full_description, negatives)
        results = backends.search(
            query,
            config.search_num,
            phase=phase,
            context=f"search.{category.value}",
        )
        seen: set[str] = set()
        candidates: list[GarmentCandidate] = []
        for result in results:
            norm = _normalize_image_url(result.image_url)
            if norm in seen:
                continue
            seen.add(norm)
            try:
                image = backends.fetch_image(result.image_url)
                candidate = GarmentCandidate(
                    image=image,
                    source_link=result.page_url,
                    image_url=result.image_url,
                )
            except (InvalidImageError, InvalidUrlError, SchemaViolationError) as exc:
                logger.info(
                    "skipping %s candidate %s: %s",
                    category.value,
                    result.image_url,
                    exc,
                )
                continue
            candidates.append(candidate)
        if not candidates:
            raise NoCandidatesError(category.value, "no downloadable results")
        best_idx = -1
        best_score = -1.0
        scored: list[GarmentCandidate] = []
        for idx, candidate in enumerate(candidates):
            score = backends.vqa_score(
                candidate.image,
                description.full_description,
                phase=phase,
                context=f"vqa.{category.value}",
            )
            scored.append(candidate.with_score(score))
            if score > best_score:
                best_idx, best_score = idx, score
        return scored[best_idx], best_score

    def diagnose(candidate: GarmentCandidate) -> NegativePromptSet:
        prompt = render_prompt(
            "search_diagnoser",
            {"user clothing description": description.full_description},
        )
        reply = backends.vlm_chat(
            loop_config.diagnoser_backend,
            "",
            prompt,
            images=[candidate.image],
            phase=phase,
            context=f"search_diagnoser.{category.value}",
        )
        return parse_prompt_pairs(reply)

    try:
        outcome = run_feedback_loop(generate, diagnose, loop_config)
    except GeneratorFailedError as exc:
        if exc.partial is None:
            cause = exc.__cause__
            if isinstance(cause, NoCandidatesError):
                raise cause
            raise NoCandidatesError(category.value, str(cause)) from exc
        logger.warning(
            "search for %s aborted on iteration %d; using best-so-far",
            category.value,
            exc.iteration,
        )
        outcome = exc.partial

    winner: GarmentCandidate = outcome.best_value
    winner = winner.with_person_present(
        _classify_person_presence(backends, winner, config, phase=phase, category=category)
    )
    return SelectedGarment(
        category=category,
        candidate=winner,
        full_description=description.full_description,
        short_description=description.short_description,
        final_score=outcome.best_score,
        iterations_used=outcome.iterations_used,
        negatives=outcome.negatives,
        satisfied=outcome.satisfied,
    )


def _classify_person_presence(
    backends: BackendSet,
    candidate: GarmentCandidate,
    config: DesignerConfig,
    *,
    phase: str,
    category: GarmentCategory,
) -> bool:
    """One cheap VLM call deciding which try-on edit prompt applies."""
    try:
        reply = backends.vlm_chat(
            config.presence_backend_id(),
            "",
            PRESENCE_PROMPT,
            images=[candidate.image],
            phase=phase,
            context=f"presence.{category.value}",
        )
    except StylistError as exc:
        logger.warning(
            "person-presence check failed for %s (%s); assuming no model",
            category.value,
            exc,
        )
        return False
    return reply.strip().lower().startswith("y")


def score_outfit(
    scores: Sequence[float],
    thresholds: Sequence[float],
    *,
    zero_scores_allowed: bool = False,
) -> float:
    """Clamped geometric mean of threshold-normalized scores.

    s0 = (prod over i of min(s_i / tau_i, 1)) ** (1/K).  A zero score
    makes the whole product zero, which normally indicates a scorer
    failure and raises ZeroScoreError; opt in to get 0.0 instead.
    """
    if not scores or len(scores) != len(thresholds):
        raise ValueError("scores and thresholds must be equal-length and non-empty")
    product = 1.0
    for s, tau in zip(scores, thresholds):
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"score {s} outside [0, 1]")
        if not 0.0 < tau <= 1.0:
            raise ValueError(f"threshold {tau} outside (0, 1]")
        if s == 0.0:
            if zero_scores_allowed:
                return 0.0
            raise ZeroScoreError(
                "a zero alignment score collapses the geometric mean; "
                "this usually means a scorer failed"
            )
        product *= min(s / tau, 1.0)
    return product ** (1.0 / len(scores))


def run_designer(
    backends: BackendSet,
    request: UserRequest,
    pool: ExpertPool,
    config: DesignerConfig,
    *,
    phase: str = "designer",
) -> OutfitProposal:
    """Run the expert cascade until an outfit clears the omega gate.

    Experts are consulted strictly in rank order.  Every rejected sheet
    (below-gate outfit or failed acquisition) becomes negative context for
    the next expert.  On pool exhaustion the highest-scoring proposal is
    returned with accepted=False; AllExpertsFailed only when no expert
    produced a scoreable outfit at all.
    """
    rejected: list[GarmentSpecSheet] = []
    failures: list[str] = []
    best: OutfitProposal | None = None

    for rank, expert in enumerate(pool.experts, start=1):
        try:
            sheet = interpret_style(
                backends,
                request,
                expert.backend_id,
                rejected,
                expert_index=rank,
                phase=phase,
            )
        except (SpecSheetParseError, BackendUnavailableError) as exc:
            logger.warning("expert %s failed: %s", expert.backend_id, exc)
            failures.append(f"{expert.backend_id}: {exc}")
            continue

        garments: list[SelectedGarment] = []
        failed = False
        for category in sheet.categories:
            try:
                garments.append(
                    acquire_garment(
                        backends,
                        category,
                        sheet.description_for(category),
                        config,
                        phase=phase,
                    )
                )
            except NoCandidatesError as exc:
                logger.warning(
                    "expert %s: no candidates for %s", expert.backend_id, exc.category
                )
                failures.append(f"{expert.backend_id}: {exc}")
                failed = True
                break
        if failed:
            rejected.append(sheet)
            continue

        try:
            s0 = score_outfit(
                [g.final_score for g in garments],
                [config.threshold_for(g.category) for g in garments],
            )
        except ZeroScoreError as exc:
            failures.append(f"{expert.backend_id}: {exc}")
            rejected.append(sheet)
            continue

        accepted = s0 >= config.omega
        proposal = OutfitProposal(
            sheet=sheet, garments=tuple(garments), outfit_score=s0, accepted=accepted
        )
        if accepted:
            return proposal
        if best is None or s0 > best.outfit_score:
            best = proposal
        rejected.append(sheet)

    if best is not None:
        return best
    raise AllExpertsFailedError("; ".join(failures) or "no expert produced an outfit")
