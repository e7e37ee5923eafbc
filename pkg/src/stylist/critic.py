"""Four-metric evaluation of the final try-on image.

Style consistency asks a VQA scorer how well the image matches a
clothing-free description of the person plus their stated preference;
visual quality is a no-reference IQA score; face similarity compares
face embeddings before and after; and a VLM grades the outfit on a
four-axis rubric.  Evaluation never fails a run: a broken metric is
reported as null with a note.
"""
from __future__ import annotations

import logging
import re
from typing import Any

from .domain import ArtistReport, EvaluationReport, UserRequest, extract_json_object
from .errors import (
    ArtistParseError,
    DescribeFailedError,
    MalformedJsonError,
    NoFaceFoundError,
    StylistError,
    SubScoreOutOfRangeError,
)
from .ports.base import BackendSet
from .prompts import render_prompt

logger = logging.getLogger(__name__)

_PERSON_DESC = re.compile(
    r"<\s*person description\s*>(.*?)<\s*/\s*person description\s*>",
    re.DOTALL | re.IGNORECASE,
)

_RATING_KEYS = {
    "design": "design rating",
    "fitness": "fit rating",
    "coherence": "coherence rating",
    "mood": "mood rating",
}

_COMMENT_KEYS = ("design", "fit", "coherence", "mood", "overall comment")


def describe_person(
    backends: BackendSet, image: bytes, vlm: str, *, phase: str = "critic"
) -> str:
    """Extract a clothing-free description of the person in the image.

    Returns the text between the first pair of person-description tags.
    The prompt asks for 50-100 words; excursions are logged, not
    rejected.
    """
    prompt = render_prompt("person_describer", {})
    reply = backends.vlm_chat(
        vlm, "", prompt, images=[image], phase=phase, context="person_describer"
    )
    match = _PERSON_DESC.search(reply)
    if not match or not match.group(1).strip():
        raise DescribeFailedError("reply carries no person description tags")
    description = match.group(1).strip()
    words = len(description.split())
    if not 50 <= words <= 100:
        logger.info("person description is %d words, outside 50-100", words)
    return description


def style_consistency(
    backends: BackendSet,
    final: bytes,
    person_desc: str,
    preference: str,
    *,
    phase: str = "critic",
) -> float:
    """VQA score of the final image against description plus preference."""
    if not person_desc.strip() or not preference.strip():
        raise ValueError("person description and preference must be non-empty")
    return backends.vqa_score(
        final, person_desc + " " + preference, phase=phase, context="vqa.style"
    )


def visual_quality(backends: BackendSet, final: bytes, *, phase: str = "critic") -> float:
    return backends.iqa_score(final, phase=phase, context="iqa")


def face_similarity(
    backends: BackendSet, original: bytes, final: bytes, *, phase: str = "critic"
) -> float | None:
    """Cosine similarity of the two face embeddings, or None if either
    image has no detectable face (a designed dataset case, not an error)."""
    try:
        u = backends.face_embed(original, phase=phase, context="face.original")
        v = backends.face_embed(final, phase=phase, context="face.final")
    except NoFaceFoundError:
        return None
    cosine = sum(a * b for a, b in zip(u, v))
    return max(-1.0, min(1.0, cosine))


def vlm_artist(
    backends: BackendSet, final: bytes, vlm: str, *, phase: str = "critic"
) -> ArtistReport:
    """Grade the outfit on the four-axis rubric.

    The overall rating is recomputed as the mean of the four sub-scores;
    the model's own overall is kept in the comments for audit.
    """
    prompt = render_prompt("artist_rubric", {})
    reply = backends.vlm_chat(
        vlm, "", prompt, images=[final], phase=phase, context="artist_rubric"
    )
    try:
        payload = extract_json_object(reply)
    except MalformedJsonError as exc:
        raise ArtistParseError(f"no JSON in artist reply: {exc}") from exc

    ratings: dict[str, int] = {}
    for axis, key in _RATING_KEYS.items():
        if key not in payload:
            raise ArtistParseError(f"artist reply missing {key!r}")
        ratings[axis] = _as_rating(key, payload[key])

    comments = {
        key: str(payload[key]) for key in _COMMENT_KEYS if key in payload
    }
    model_overall = payload.get("overall rating")
    if model_overall is not None:
        comments["model overall"] = str(model_overall)
        recomputed = sum(ratings.values()) / 4.0
        if abs(float(model_overall) - recomputed) > 1e-9:
            logger.info(
                "artist overall %s differs from recomputed mean %s",
                model_overall,
                recomputed,
            )
    return ArtistReport.from_subscores(
        ratings["design"],
        ratings["fitness"],
        ratings["coherence"],
        ratings["mood"],
        comments,
    )


def _as_rating(key: str, value: Any) -> int:
    if isinstance(value, bool):
        raise ArtistParseError(f"{key!r} is not an integer rating")
    if isinstance(value, float):
        if not value.is_integer():
            raise ArtistParseError(f"{key!r} = {value} is not an integer rating")
        value = int(value)
    if not isinstance(value, int):
        raise ArtistParseError(f"{key!r} = {value!r} is not an integer rating")
    if not 1 <= value <= 10:
        raise SubScoreOutOfRangeError(f"{key!r} = {value} outside 1..10")
    return value


def evaluate(
    backends: BackendSet,
    request: UserRequest,
    final: bytes,
    vlm: str,
    *,
    phase: str = "critic",
) -> EvaluationReport:
    """Run all four metrics, degrading each failure to null-with-note."""
    notes: dict[str, str] = {}

    style: float | None = None
    try:
        desc = describe_person(backends, request.user_image, vlm, phase=phase)
        style = style_consistency(
            backends, final, desc, request.preference_text, phase=phase
        )
    except Exception as exc:
        logger.warning("style consistency unavailable: %s", exc)
        notes["style_consistency"] = _note(exc)

    quality: float | None = None
    try:
        quality = visual_quality(backends, final, phase=phase)
    except Exception as exc:
        logger.warning("visual quality unavailable: %s", exc)
        notes["visual_quality"] = _note(exc)

    face: float | None = None
    try:
        face = face_similarity(backends, request.user_image, final, phase=phase)
        if face is None:
            notes["face_similarity"] = "no detectable face; metric skipped"
    except Exception as exc:
        logger.warning("face similarity unavailable: %s", exc)
        notes["face_similarity"] = _note(exc)

    artist: ArtistReport | None = None
    try:
        artist = vlm_artist(backends, final, vlm, phase=phase)
    except Exception as exc:
        logger.warning("artist rubric unavailable: %s", exc)
        notes["artist"] = _note(exc)

    return EvaluationReport(
        style_consistency=style,
        visual_quality=quality,
        face_similarity=face,
        artist=artist,
        notes=notes,
    )


def _note(exc: Exception) -> str:
    name = type(exc).__name__
    if isinstance(exc, StylistError):
        name = name.removesuffix("Error")
    return f"{name}: {exc}"
