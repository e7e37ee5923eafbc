"""Progressive virtual try-on.

Garments are applied to the user photo one at a time, largest region
first, so later edits cannot be buried under earlier ones.  Each stage
generates l edit candidates, masks the target region on each, picks the
candidate whose masked crop best matches the purchased garment photo, and
loops with negative feedback while the match is below the category gate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .domain import (
    Gender,
    GarmentCandidate,
    GarmentCategory,
    NegativePromptSet,
    OutfitProposal,
    TryOnStage,
    TryOnState,
    order_categories,
    parse_prompt_pairs,
)
from .errors import (
    AllRegionsMissingError,
    GeneratorFailedError,
    RegionNotFoundError,
    StageFailedError,
)
from .feedback import LoopConfig, run_feedback_loop
from .imaging import apply_mask_white, hconcat_white
from .ports.base import BackendSet
from .prompts import render_prompt

logger = logging.getLogger(__name__)

__all__ = [
    "ConsultantConfig",
    "DEFAULT_SIGMA",
    "TryOnSelection",
    "generate_tryon_candidates",
    "order_categories",
    "run_consultant",
    "select_tryon_candidate",
]

#: Per-category masked-similarity gates for the try-on loop.
DEFAULT_SIGMA: Mapping[GarmentCategory, float] = {
    GarmentCategory.UPPER_BODY: 0.7,
    GarmentCategory.LOWER_BODY: 0.7,
    GarmentCategory.DRESS: 0.7,
    GarmentCategory.SHOES: 0.5,
    GarmentCategory.HAT: 0.5,
    GarmentCategory.GLASSES: 0.6,
    GarmentCategory.BELT: 0.6,
    GarmentCategory.SCARF: 0.6,
}

DEFAULT_CANDIDATES_PER_ROUND = 3


@dataclass(frozen=True)
class ConsultantConfig:
    sigma: Mapping[GarmentCategory, float] = field(
        default_factory=lambda: dict(DEFAULT_SIGMA)
    )
    candidates_per_round: int = DEFAULT_CANDIDATES_PER_ROUND
    tryon_loop: LoopConfig = field(default_factory=lambda: LoopConfig(0.7, 3))

    def __post_init__(self) -> None:
        if self.candidates_per_round < 1:
            raise ValueError("candidates_per_round must be >= 1")
        for cat, sigma in self.sigma.items():
            if not 0.0 < sigma <= 1.0:
                raise ValueError(f"sigma[{cat.value}] = {sigma} outside (0, 1]")

    def threshold_for(self, category: GarmentCategory) -> float:
        if category not in self.sigma:
            raise ValueError(f"no sigma threshold for {category.value}")
        return self.sigma[category]


@dataclass(frozen=True)
class TryOnSelection:
    """The winning edit candidate of one generation round."""

    chosen: bytes
    masked_similarity: float
    index: int


def generate_tryon_candidates(
    backends: BackendSet,
    current: bytes,
    garment: GarmentCandidate,
    short_description: str,
    gender: Gender,
    negatives: NegativePromptSet,
    l: int,
    *,
    category: GarmentCategory,
    phase: str = "consultant",
) -> list[bytes]:
    """Ask the editor for l try-on candidates.

    The edit prompt variant depends on whether the garment photo shows a
    model wearing it; the editor input is the person image and garment
    photo concatenated side by side (person on the left, as the prompt
    assumes).  Accumulated negative phrases ride along as negative terms.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    template = (
        "tryon_garment_with_model"
        if garment.person_present
        else "tryon_garment_without_model"
    )
    prompt = render_prompt(
        template, {"gender": gender.value, "description": short_description}
    )
    combined = hconcat_white(current, garment.image)
    return backends.image_edit(
        [combined],
        prompt,
        list(negatives.negatives),
        l,
        phase=phase,
        context=f"tryon.{category.value}",
    )


def select_tryon_candidate(
    backends: BackendSet,
    candidates: Sequence[bytes],
    garment_image: bytes,
    category: GarmentCategory,
    *,
    phase: str = "consultant",
) -> TryOnSelection:
    """Pick the candidate whose masked garment region matches the photo.

    Each candidate is masked to the category region (composited on white)
    and compared to the purchased garment image.  A candidate whose region
    cannot be found scores -1 and only wins if no candidate has a region,
    which instead raises AllRegionsMissing.  Ties go to the lowest index.
    """
    if not candidates:
        raise ValueError("select_tryon_candidate needs at least one candidate")
    best_idx = -1
    best_sim = float("-inf")
    any_region = False
    for idx, candidate in enumerate(candidates):
        try:
            mask = backends.mask_region(
                candidate, category, phase=phase, context=f"mask.{category.value}"
            )
        except RegionNotFoundError:
            similarity = -1.0
        else:
            any_region = True
            masked = apply_mask_white(candidate, mask)
            similarity = backends.clip_image_similarity(
                masked, garment_image, phase=phase, context=f"clip.{category.value}"
            )
        if similarity > best_sim:
            best_idx, best_sim = idx, similarity
    if not any_region:
        raise AllRegionsMissingError(
            f"no candidate shows a detectable {category.value} region"
        )
    return TryOnSelection(
        chosen=bytes(candidates[best_idx]),
        masked_similarity=best_sim,
        index=best_idx,
    )


def run_consultant(
    backends: BackendSet,
    base: bytes,
    outfit: OutfitProposal,
    config: ConsultantConfig,
    *,
    phase: str = "consultant",
) -> TryOnState:
    """Dress the user image garment by garment, in canonical order.

    Every stage is one feedback loop: generate candidates, select by
    masked similarity, gate on sigma, diagnose and regenerate.  The next
    stage always starts from the previous stage's best image, satisfied
    or not.  A stage that never produces a usable image raises
    StageFailed.
    """
    if not outfit.garments:
        raise ValueError("outfit has no garments to try on")
    state = TryOnState(current_image=base)
    gender = outfit.sheet.gender

    for category in order_categories(g.category for g in outfit.garments):
        garment = outfit.garment_for(category)
        loop_config = config.tryon_loop.with_threshold(
            config.threshold_for(category)
        )
        current = state.current_image

        def generate(negatives: NegativePromptSet) -> tuple[TryOnSelection, float]:
            candidates = generate_tryon_candidates(
                backends,
                current,
                garment.candidate,
                garment.short_description,
                gender,
                negatives,
                config.candidates_per_round,
                category=category,
                phase=phase,
            )
            selection = select_tryon_candidate(
                backends,
                candidates,
                garment.candidate.image,
                category,
                phase=phase,
            )
            return selection, selection.masked_similarity

        def diagnose(selection: TryOnSelection) -> NegativePromptSet:
            prompt = render_prompt(
                "tryon_diagnoser",
                {"user clothing description": garment.short_description},
            )
            reply = backends.vlm_chat(
                loop_config.diagnoser_backend,
                "",
                prompt,
                images=[selection.chosen, garment.candidate.image],
                phase=phase,
                context=f"tryon_diagnoser.{category.value}",
            )
            return parse_prompt_pairs(reply)

        try:
            outcome = run_feedback_loop(generate, diagnose, loop_config)
        except GeneratorFailedError as exc:
            if exc.partial is None:
                raise StageFailedError(category.value, exc.__cause__) from exc
            logger.warning(
                "try-on for %s aborted on iteration %d; using best-so-far",
                category.value,
                exc.iteration,
            )
            outcome = exc.partial

        selection: TryOnSelection = outcome.best_value
        stage = TryOnStage(
            category=category,
            garment=garment,
            input_image=current,
            chosen_image=selection.chosen,
            masked_similarity=outcome.best_score,
            regenerations=outcome.iterations_used - 1,
            negatives=outcome.negatives,
            satisfied=outcome.satisfied,
        )
        state = state.advanced(stage)

    return state
