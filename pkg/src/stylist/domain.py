"""Core value types for the styling pipeline.

Holds the garment vocabulary, the parsed spec sheet an expert emits, the
candidate/selection records produced by acquisition, the try-on chain, and
the final evaluation report.  Every type validates its own invariants on
construction and round-trips through ``to_dict``/``from_dict``.
"""
from __future__ import annotations

import base64
import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence
from urllib.parse import urlsplit, urlunsplit

from .errors import (
    ConflictingCategoriesError,
    InvalidUrlError,
    MalformedJsonError,
    SchemaViolationError,
    SubScoreOutOfRangeError,
)
from .imaging import require_min_size

logger = logging.getLogger(__name__)

MIN_IMAGE_SIDE = 64

#: Maximum words kept per feedback phrase; longer phrases are truncated.
MAX_PHRASE_WORDS = 3


class Gender(enum.Enum):
    """The two presentation values the garment prompts are written for."""

    MAN = "man"
    WOMAN = "woman"

    @classmethod
    def parse(cls, raw: str) -> "Gender":
        value = raw.strip().lower()
        for member in cls:
            if member.value == value:
                return member
        raise SchemaViolationError(f"unrecognised gender {raw!r}")


class GarmentCategory(enum.Enum):
    """Garment slots an outfit may fill.

    ``tryon_rank`` fixes the dressing order: body-covering pieces first,
    then shoes, then accessories from large to small, so later edits
    cannot be hidden underneath earlier ones.
    """

    DRESS = "dress"
    UPPER_BODY = "upper_body"
    LOWER_BODY = "lower_body"
    SHOES = "shoes"
    HAT = "hat"
    GLASSES = "glasses"
    BELT = "belt"
    SCARF = "scarf"

    @property
    def tryon_rank(self) -> int:
        return _TRYON_RANK[self]

    @property
    def sheet_name(self) -> str:
        """The spelling used inside expert-emitted sheet JSON."""
        return _SHEET_NAME[self]

    @classmethod
    def from_sheet_name(cls, raw: str) -> "GarmentCategory":
        key = raw.strip().lower().replace("_", " ")
        try:
            return _FROM_SHEET_NAME[key]
        except KeyError:
            raise SchemaViolationError(f"unknown garment category {raw!r}") from None


_TRYON_RANK = {
    GarmentCategory.DRESS: 0,
    GarmentCategory.UPPER_BODY: 1,
    GarmentCategory.LOWER_BODY: 2,
    GarmentCategory.SHOES: 3,
    GarmentCategory.SCARF: 4,
    GarmentCategory.HAT: 5,
    GarmentCategory.BELT: 6,
    GarmentCategory.GLASSES: 7,
}

_SHEET_NAME = {
    GarmentCategory.DRESS: "dresses",
    GarmentCategory.UPPER_BODY: "upper body",
    GarmentCategory.LOWER_BODY: "lower body",
    GarmentCategory.SHOES: "shoes",
    GarmentCategory.HAT: "hat",
    GarmentCategory.GLASSES: "glasses",
    GarmentCategory.BELT: "belt",
    GarmentCategory.SCARF: "scarf",
}

_FROM_SHEET_NAME = {name: cat for cat, name in _SHEET_NAME.items()}
# Sheets sometimes arrive with the singular/enum spelling; accept it too.
_FROM_SHEET_NAME["dress"] = GarmentCategory.DRESS

#: All categories in dressing order.
CANONICAL_TRYON_ORDER: tuple[GarmentCategory, ...] = tuple(
    sorted(GarmentCategory, key=lambda c: c.tryon_rank)
)


def order_categories(categories: Iterable[GarmentCategory]) -> tuple[GarmentCategory, ...]:
    """Sort categories into the fixed dressing order."""
    return tuple(sorted(categories, key=lambda c: c.tryon_rank))


def validate_candidate_link(url: str) -> str:
    """Check that a product link is absolute and return its normal form.

    Normalisation lowercases the scheme and host and drops any fragment;
    path, query, port and userinfo are preserved as given.
    """
    parts = urlsplit(url.strip())
    if not parts.scheme or not parts.netloc:
        raise InvalidUrlError(f"not an absolute url: {url!r}")
    netloc = parts.netloc
    if "@" in netloc:
        userinfo, host = netloc.rsplit("@", 1)
        netloc = userinfo + "@" + host.lower()
    else:
        netloc = netloc.lower()
    return urlunsplit((parts.scheme.lower(), netloc, parts.path, parts.query, ""))


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


def canonical_json(payload: Any) -> str:
    """Stable JSON rendering used wherever replay-identical output matters."""
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# feedback phrases


@dataclass(frozen=True)
class PromptPair:
    """A corrective phrase pair: what to ask for, what to steer away from."""

    positive: str
    negative: str

    def __post_init__(self) -> None:
        if not self.negative.strip():
            raise SchemaViolationError("negative phrase must be non-empty")
        for label, phrase in (("positive", self.positive), ("negative", self.negative)):
            if len(phrase.split()) > MAX_PHRASE_WORDS:
                raise SchemaViolationError(
                    f"{label} phrase longer than {MAX_PHRASE_WORDS} words: {phrase!r}"
                )


@dataclass(frozen=True)
class NegativePromptSet:
    """Ordered, duplicate-free accumulation of corrective phrase pairs.

    Duplicates are judged on the negative phrase, case-insensitively,
    because the negative side is what reaches search queries and editors.
    """

    pairs: tuple[PromptPair, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for pair in self.pairs:
            key = pair.negative.strip().lower()
            if key in seen:
                raise SchemaViolationError(
                    f"duplicate negative phrase {pair.negative!r}"
                )
            seen.add(key)

    @classmethod
    def from_pairs(cls, raw: Iterable[tuple[str, str]]) -> "NegativePromptSet":
        """Build a set from loosely validated model output.

        Phrases longer than the word cap are truncated to their first
        words, pairs with an empty negative are dropped, and later
        case-insensitive duplicates lose to earlier ones.
        """
        pairs: list[PromptPair] = []
        seen: set[str] = set()
        for positive, negative in raw:
            negative = _clip_phrase(negative)
            if not negative:
                continue
            key = negative.lower()
            if key in seen:
                continue
            seen.add(key)
            pairs.append(PromptPair(_clip_phrase(positive), negative))
        return cls(tuple(pairs))

    def merged(self, other: "NegativePromptSet") -> "NegativePromptSet":
        """Order-preserving union: self first, then other's novel pairs."""
        pairs = list(self.pairs)
        seen = {p.negative.strip().lower() for p in pairs}
        for pair in other.pairs:
            key = pair.negative.strip().lower()
            if key not in seen:
                seen.add(key)
                pairs.append(pair)
        return NegativePromptSet(tuple(pairs))

    @property
    def negatives(self) -> tuple[str, ...]:
        return tuple(p.negative for p in self.pairs)

    @property
    def positives(self) -> tuple[str, ...]:
        return tuple(p.positive for p in self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __bool__(self) -> bool:
        return bool(self.pairs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pairs": [
                {"positive": p.positive, "negative": p.negative} for p in self.pairs
            ]
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "NegativePromptSet":
        return cls(
            tuple(
                PromptPair(item["positive"], item["negative"])
                for item in payload.get("pairs", [])
            )
        )


def _clip_phrase(phrase: str) -> str:
    words = phrase.split()
    if len(words) > MAX_PHRASE_WORDS:
        clipped = " ".join(words[:MAX_PHRASE_WORDS])
        logger.info("clipping feedback phrase %r to %r", phrase, clipped)
        return clipped
    return " ".join(words)


# ---------------------------------------------------------------------------
# user input


@dataclass(frozen=True)
class UserRequest:
    """What the pipeline is asked to style: a person photo plus a wish."""

    request_id: str
    user_image: bytes
    preference_text: str

    def __post_init__(self) -> None:
        if not self.request_id.strip():
            raise SchemaViolationError("request_id must be non-empty")
        if not self.preference_text.strip():
            raise SchemaViolationError("preference_text must be non-empty")
        require_min_size(self.user_image, MIN_IMAGE_SIDE, MIN_IMAGE_SIDE)

    def to_dict(self) -> dict[str, Any]:
        return {
            "request_id": self.request_id,
            "user_image_b64": _b64(self.user_image),
            "preference_text": self.preference_text,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "UserRequest":
        return cls(
            request_id=payload["request_id"],
            user_image=_unb64(payload["user_image_b64"]),
            preference_text=payload["preference_text"],
        )


# ---------------------------------------------------------------------------
# spec sheet


@dataclass(frozen=True)
class GarmentDescription:
    """Long and short search-ready descriptions of one garment."""

    full_description: str
    short_description: str

    def __post_init__(self) -> None:
        if not self.full_description.strip():
            raise SchemaViolationError("full_description must be non-empty")
        if not self.short_description.strip():
            raise SchemaViolationError("short_description must be non-empty")


@dataclass(frozen=True)
class GarmentSpecSheet:
    """One expert's outfit plan: categories plus a description per category."""

    gender: Gender
    categories: tuple[GarmentCategory, ...]
    entries: Mapping[GarmentCategory, GarmentDescription]
    expert_index: int = 1

    def __post_init__(self) -> None:
        if not self.categories:
            raise SchemaViolationError("sheet lists no categories")
        if len(set(self.categories)) != len(self.categories):
            raise SchemaViolationError("sheet lists a category twice")
        _check_exclusivity(self.categories)
        for cat in self.entries:
            if cat not in self.categories:
                raise SchemaViolationError(
                    f"entry for {cat.value} not listed under categories"
                )
        for cat in self.categories:
            if cat not in self.entries:
                raise SchemaViolationError(f"no entry for category {cat.value}")
        if self.expert_index < 1:
            raise SchemaViolationError("expert_index must be >= 1")

    def description_for(self, category: GarmentCategory) -> GarmentDescription:
        return self.entries[category]

    def to_sheet_json(self) -> dict[str, Any]:
        """Render back into the wire shape experts emit.

        Used when a rejected sheet is fed to the next expert as a negative
        example, so the example matches the format the model was asked for.
        """
        prompts: dict[str, str] = {"gender": self.gender.value}
        for cat in self.categories:
            entry = self.entries[cat]
            prompts[cat.sheet_name] = entry.full_description
            prompts[f"{cat.sheet_name} short"] = entry.short_description
        return {
            "category": [cat.sheet_name for cat in self.categories],
            "prompts": prompts,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "gender": self.gender.value,
            "categories": [cat.value for cat in self.categories],
            "entries": {
                cat.value: {
                    "full_description": entry.full_description,
                    "short_description": entry.short_description,
                }
                for cat, entry in sorted(
                    self.entries.items(), key=lambda kv: kv[0].tryon_rank
                )
            },
            "expert_index": self.expert_index,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "GarmentSpecSheet":
        return cls(
            gender=Gender.parse(payload["gender"]),
            categories=tuple(
                GarmentCategory(v) for v in payload["categories"]
            ),
            entries={
                GarmentCategory(k): GarmentDescription(
                    v["full_description"], v["short_description"]
                )
                for k, v in payload["entries"].items()
            },
            expert_index=payload.get("expert_index", 1),
        )


def _check_exclusivity(categories: Sequence[GarmentCategory]) -> None:
    cats = set(categories)
    has_dress = GarmentCategory.DRESS in cats
    has_upper = GarmentCategory.UPPER_BODY in cats
    has_lower = GarmentCategory.LOWER_BODY in cats
    if has_dress and (has_upper or has_lower):
        raise ConflictingCategoriesError(
            "a dress cannot be combined with upper or lower body garments"
        )
    if not has_dress and not (has_upper and has_lower):
        raise ConflictingCategoriesError(
            "outfit must include either a dress or both upper and lower body garments"
        )


def extract_json_object(text: str) -> dict[str, Any]:
    """Pull the first balanced JSON object out of free-form model text.

    Tolerates surrounding prose and markdown code fences.  Raises
    MalformedJsonError when no parseable object is present.
    """
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(stripped)
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            pass
    pos = 0
    while True:
        start = text.find("{", pos)
        if start == -1:
            raise MalformedJsonError("no JSON object found in reply")
        end = _balanced_end(text, start)
        if end is not None:
            try:
                obj = json.loads(text[start : end + 1])
            except json.JSONDecodeError:
                obj = None
            if isinstance(obj, dict):
                return obj
        pos = start + 1


def _balanced_end(text: str, start: int) -> int | None:
    """Index of the brace closing the object opened at ``start``, if any."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    return None


def parse_spec_sheet(json_text: str, expert_index: int = 1) -> GarmentSpecSheet:
    """Parse an expert's reply into a validated GarmentSpecSheet.

    The reply may wrap the JSON in prose or code fences.  Expected shape::

        {"category": ["upper body", ...],
         "prompts": {"gender": "man",
                     "upper body": "...", "upper body short": "..."}}

    Category spellings are normalised, duplicates collapse to the first
    occurrence, and the dress/upper+lower exclusivity rule is enforced.
    """
    payload = extract_json_object(json_text)
    if "category" not in payload:
        raise SchemaViolationError("sheet JSON missing 'category' list")
    if "prompts" not in payload or not isinstance(payload["prompts"], Mapping):
        raise SchemaViolationError("sheet JSON missing 'prompts' object")
    raw_categories = payload["category"]
    if isinstance(raw_categories, str):
        raw_categories = [raw_categories]
    if not isinstance(raw_categories, Sequence) or not raw_categories:
        raise SchemaViolationError("'category' must be a non-empty list")

    prompts = payload["prompts"]
    raw_gender = prompts.get("gender")
    if not isinstance(raw_gender, str):
        raise SchemaViolationError("prompts missing 'gender'")
    gender = Gender.parse(raw_gender)

    categories: list[GarmentCategory] = []
    for raw in raw_categories:
        if not isinstance(raw, str):
            raise SchemaViolationError(f"category entry {raw!r} is not a string")
        cat = GarmentCategory.from_sheet_name(raw)
        if cat not in categories:
            categories.append(cat)

    entries: dict[GarmentCategory, GarmentDescription] = {}
    for cat in categories:
        full = _prompt_value(prompts, cat.sheet_name)
        short = _prompt_value(prompts, f"{cat.sheet_name} short")
        if full is None:
            raise SchemaViolationError(
                f"prompts missing description for {cat.sheet_name!r}"
            )
        if short is None:
            raise SchemaViolationError(
                f"prompts missing short description for {cat.sheet_name!r}"
            )
        entries[cat] = GarmentDescription(full, short)

    return GarmentSpecSheet(
        gender=gender,
        categories=tuple(categories),
        entries=entries,
        expert_index=expert_index,
    )


def parse_prompt_pairs(reply_text: str) -> NegativePromptSet:
    """Parse a diagnoser reply into phrase pairs.

    Accepts both the spaced and underscored key spellings the diagnoser
    prompts demonstrate ("positive prompt" / "positive_prompt"), and both
    list and bare-string values.  Positives and negatives are zipped in
    order; an unmatched negative keeps an empty positive, and unmatched
    positives are dropped.
    """
    payload = extract_json_object(reply_text)
    negatives = _phrase_list(payload, "negative prompt", "negative_prompt")
    if negatives is None:
        raise SchemaViolationError("diagnoser reply lacks a negative prompt list")
    positives = _phrase_list(payload, "positive prompt", "positive_prompt") or []
    pairs = []
    for i, negative in enumerate(negatives):
        positive = positives[i] if i < len(positives) else ""
        pairs.append((positive, negative))
    return NegativePromptSet.from_pairs(pairs)


def _phrase_list(payload: Mapping[str, Any], *keys: str) -> list[str] | None:
    for key in keys:
        if key in payload:
            value = payload[key]
            if isinstance(value, str):
                return [value]
            if isinstance(value, Sequence):
                return [str(v) for v in value]
            raise SchemaViolationError(f"{key!r} must be a string or list")
    return None


def _prompt_value(prompts: Mapping[str, Any], name: str) -> str | None:
    """Fetch a prompts value, accepting underscore and singular spellings."""
    candidates = [name, name.replace(" ", "_")]
    if name.startswith("dresses"):
        candidates.append(name.replace("dresses", "dress"))
    for key in candidates:
        value = prompts.get(key)
        if isinstance(value, str) and value.strip():
            return value
    return None


# ---------------------------------------------------------------------------
# acquisition results


@dataclass(frozen=True)
class GarmentCandidate:
    """One shopping result: a product photo plus where it came from."""

    image: bytes
    source_link: str
    alignment_score: float | None = None
    image_url: str = ""
    person_present: bool = False

    def __post_init__(self) -> None:
        if not self.image:
            raise SchemaViolationError("candidate has no image bytes")
        object.__setattr__(
            self, "source_link", validate_candidate_link(self.source_link)
        )
        if self.alignment_score is not None and not 0.0 <= self.alignment_score <= 1.0:
            raise SchemaViolationError(
                f"alignment_score {self.alignment_score} outside [0, 1]"
            )

    def with_score(self, score: float) -> "GarmentCandidate":
        return GarmentCandidate(
            image=self.image,
            source_link=self.source_link,
            alignment_score=score,
            image_url=self.image_url,
            person_present=self.person_present,
        )

    def with_person_present(self, present: bool) -> "GarmentCandidate":
        return GarmentCandidate(
            image=self.image,
            source_link=self.source_link,
            alignment_score=self.alignment_score,
            image_url=self.image_url,
            person_present=present,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "image_b64": _b64(self.image),
            "source_link": self.source_link,
            "alignment_score": self.alignment_score,
            "image_url": self.image_url,
            "person_present": self.person_present,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "GarmentCandidate":
        return cls(
            image=_unb64(payload["image_b64"]),
            source_link=payload["source_link"],
            alignment_score=payload.get("alignment_score"),
            image_url=payload.get("image_url", ""),
            person_present=payload.get("person_present", False),
        )


@dataclass(frozen=True)
class SelectedGarment:
    """The winning candidate for one category, with its acquisition trace."""

    category: GarmentCategory
    candidate: GarmentCandidate
    full_description: str
    short_description: str
    final_score: float
    iterations_used: int
    negatives: NegativePromptSet = field(default_factory=NegativePromptSet)
    satisfied: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.final_score <= 1.0:
            raise SchemaViolationError(
                f"final_score {self.final_score} outside [0, 1]"
            )
        if self.iterations_used < 1:
            raise SchemaViolationError("iterations_used must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category.value,
            "candidate": self.candidate.to_dict(),
            "full_description": self.full_description,
            "short_description": self.short_description,
            "final_score": self.final_score,
            "iterations_used": self.iterations_used,
            "negatives": self.negatives.to_dict(),
            "satisfied": self.satisfied,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "SelectedGarment":
        return cls(
            category=GarmentCategory(payload["category"]),
            candidate=GarmentCandidate.from_dict(payload["candidate"]),
            full_description=payload["full_description"],
            short_description=payload["short_description"],
            final_score=payload["final_score"],
            iterations_used=payload["iterations_used"],
            negatives=NegativePromptSet.from_dict(payload.get("negatives", {})),
            satisfied=payload.get("satisfied", True),
        )


@dataclass(frozen=True)
class OutfitProposal:
    """A complete garment set for one sheet, with its aggregate score."""

    sheet: GarmentSpecSheet
    garments: tuple[SelectedGarment, ...]
    outfit_score: float
    accepted: bool

    def __post_init__(self) -> None:
        sheet_cats = set(self.sheet.categories)
        garment_cats = [g.category for g in self.garments]
        if len(set(garment_cats)) != len(garment_cats):
            raise SchemaViolationError("two garments share a category")
        if set(garment_cats) != sheet_cats:
            raise SchemaViolationError(
                "garments do not cover exactly the sheet's categories"
            )
        if not 0.0 < self.outfit_score <= 1.0:
            raise SchemaViolationError(
                f"outfit_score {self.outfit_score} outside (0, 1]"
            )

    def garment_for(self, category: GarmentCategory) -> SelectedGarment:
        for g in self.garments:
            if g.category == category:
                return g
        raise KeyError(category)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sheet": self.sheet.to_dict(),
            "garments": [g.to_dict() for g in self.garments],
            "outfit_score": self.outfit_score,
            "accepted": self.accepted,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "OutfitProposal":
        return cls(
            sheet=GarmentSpecSheet.from_dict(payload["sheet"]),
            garments=tuple(
                SelectedGarment.from_dict(g) for g in payload["garments"]
            ),
            outfit_score=payload["outfit_score"],
            accepted=payload["accepted"],
        )


# ---------------------------------------------------------------------------
# try-on chain


@dataclass(frozen=True)
class TryOnStage:
    """One dressing step: a garment applied to the running person image."""

    category: GarmentCategory
    garment: SelectedGarment
    input_image: bytes
    chosen_image: bytes
    masked_similarity: float
    regenerations: int
    negatives: NegativePromptSet = field(default_factory=NegativePromptSet)
    satisfied: bool = True

    def __post_init__(self) -> None:
        if self.garment.category != self.category:
            raise SchemaViolationError(
                f"stage category {self.category.value} does not match "
                f"garment category {self.garment.category.value}"
            )
        if not self.input_image or not self.chosen_image:
            raise SchemaViolationError("try-on stage is missing image bytes")
        if not -1.0 <= self.masked_similarity <= 1.0:
            raise SchemaViolationError(
                f"masked_similarity {self.masked_similarity} outside [-1, 1]"
            )
        if self.regenerations < 0:
            raise SchemaViolationError("regenerations must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category.value,
            "garment": self.garment.to_dict(),
            "input_image_b64": _b64(self.input_image),
            "chosen_image_b64": _b64(self.chosen_image),
            "masked_similarity": self.masked_similarity,
            "regenerations": self.regenerations,
            "negatives": self.negatives.to_dict(),
            "satisfied": self.satisfied,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "TryOnStage":
        return cls(
            category=GarmentCategory(payload["category"]),
            garment=SelectedGarment.from_dict(payload["garment"]),
            input_image=_unb64(payload["input_image_b64"]),
            chosen_image=_unb64(payload["chosen_image_b64"]),
            masked_similarity=payload["masked_similarity"],
            regenerations=payload["regenerations"],
            negatives=NegativePromptSet.from_dict(payload.get("negatives", {})),
            satisfied=payload.get("satisfied", True),
        )


@dataclass(frozen=True)
class TryOnState:
    """The dressing chain so far plus the current person image."""

    current_image: bytes
    stages: tuple[TryOnStage, ...] = ()

    def __post_init__(self) -> None:
        if not self.current_image:
            raise SchemaViolationError("try-on state has no current image")
        ranks = [s.category.tryon_rank for s in self.stages]
        if ranks != sorted(ranks) or len(set(ranks)) != len(ranks):
            raise SchemaViolationError("stages are out of dressing order")
        for prev, nxt in zip(self.stages, self.stages[1:]):
            if nxt.input_image != prev.chosen_image:
                raise SchemaViolationError(
                    f"stage {nxt.category.value} does not chain from "
                    f"{prev.category.value}"
                )
        if self.stages and self.current_image != self.stages[-1].chosen_image:
            raise SchemaViolationError(
                "current image is not the last stage's chosen image"
            )

    def advanced(self, stage: TryOnStage) -> "TryOnState":
        return TryOnState(
            current_image=stage.chosen_image, stages=self.stages + (stage,)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "current_image_b64": _b64(self.current_image),
            "stages": [s.to_dict() for s in self.stages],
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "TryOnState":
        return cls(
            current_image=_unb64(payload["current_image_b64"]),
            stages=tuple(TryOnStage.from_dict(s) for s in payload.get("stages", [])),
        )


# ---------------------------------------------------------------------------
# evaluation


_ARTIST_AXES = ("design", "fitness", "coherence", "mood")


@dataclass(frozen=True)
class ArtistReport:
    """Rubric scores from the reviewing model, on a 1-10 scale."""

    design: int
    fitness: int
    coherence: int
    mood: int
    overall: float
    comments: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for axis in _ARTIST_AXES:
            value = getattr(self, axis)
            if not isinstance(value, int) or isinstance(value, bool):
                raise SubScoreOutOfRangeError(f"{axis} rating {value!r} is not an int")
            if not 1 <= value <= 10:
                raise SubScoreOutOfRangeError(
                    f"{axis} rating {value} outside 1..10"
                )
        expected = (self.design + self.fitness + self.coherence + self.mood) / 4.0
        if abs(self.overall - expected) > 1e-9:
            raise SchemaViolationError(
                f"overall {self.overall} is not the mean {expected} of the sub-scores"
            )

    @classmethod
    def from_subscores(
        cls,
        design: int,
        fitness: int,
        coherence: int,
        mood: int,
        comments: Mapping[str, str] | None = None,
    ) -> "ArtistReport":
        overall = (design + fitness + coherence + mood) / 4.0
        return cls(design, fitness, coherence, mood, overall, dict(comments or {}))

    def to_dict(self) -> dict[str, Any]:
        return {
            "design": self.design,
            "fitness": self.fitness,
            "coherence": self.coherence,
            "mood": self.mood,
            "overall": self.overall,
            "comments": dict(self.comments),
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "ArtistReport":
        return cls(
            design=payload["design"],
            fitness=payload["fitness"],
            coherence=payload["coherence"],
            mood=payload["mood"],
            overall=payload["overall"],
            comments=dict(payload.get("comments", {})),
        )


@dataclass(frozen=True)
class EvaluationReport:
    """Final quality read-out; any metric may be null if its backend failed."""

    style_consistency: float | None
    visual_quality: float | None
    face_similarity: float | None
    artist: ArtistReport | None
    notes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("style_consistency", "visual_quality"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise SchemaViolationError(f"{name} {value} outside [0, 1]")
        if self.face_similarity is not None and not -1.0 <= self.face_similarity <= 1.0:
            raise SchemaViolationError(
                f"face_similarity {self.face_similarity} outside [-1, 1]"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "style_consistency": self.style_consistency,
            "visual_quality": self.visual_quality,
            "face_similarity": self.face_similarity,
            "artist": self.artist.to_dict() if self.artist else None,
            "notes": dict(self.notes),
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "EvaluationReport":
        artist = payload.get("artist")
        return cls(
            style_consistency=payload.get("style_consistency"),
            visual_quality=payload.get("visual_quality"),
            face_similarity=payload.get("face_similarity"),
            artist=ArtistReport.from_dict(artist) if artist else None,
            notes=dict(payload.get("notes", {})),
        )
