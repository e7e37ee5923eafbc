"""Exception hierarchy for the styling pipeline.

Every failure mode that callers are expected to branch on has its own
class; anything anonymous stays a plain StylistError.
"""
from __future__ import annotations

from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .feedback import LoopOutcome


class StylistError(Exception):
    """Base class for all pipeline errors."""


# ---------------------------------------------------------------------------
# Domain / parsing


class MalformedJsonError(StylistError):
    """No parseable JSON object could be extracted from a model reply."""


class SchemaViolationError(StylistError):
    """A parsed reply is JSON but violates the expected schema."""


class ConflictingCategoriesError(SchemaViolationError):
    """A spec sheet lists a dress together with upper/lower body garments."""


class InvalidUrlError(StylistError):
    """A candidate link is not an absolute, scheme-qualified URL."""


class InvalidImageError(StylistError):
    """Raster bytes could not be decoded, or fail minimum-size checks."""


# ---------------------------------------------------------------------------
# Prompt registry


class UnknownTemplateError(StylistError):
    def __init__(self, template_id: str):
        self.template_id = template_id
        super().__init__(f"unknown prompt template: {template_id!r}")


class MissingArgError(StylistError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing template argument: {name!r}")


class ExtraArgError(StylistError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unexpected template argument: {name!r}")


# ---------------------------------------------------------------------------
# Backend ports


class BackendUnavailableError(StylistError):
    """The named backend is not registered or cannot be reached."""


class BackendTimeoutError(StylistError):
    """A live backend did not answer within its deadline."""


class EmptyReplyError(StylistError):
    """A chat backend returned no usable text."""


class QuotaExceededError(StylistError):
    """The search provider rejected the call for quota reasons."""


class NoResultsError(StylistError):
    """The search provider errored; distinct from a valid empty result list."""


class GenerationFailedError(StylistError):
    """The image editor failed to produce candidates."""


class ContentRejectedError(StylistError):
    """The image editor refused the request on content grounds."""


class ScorerUnavailableError(StylistError):
    """A scorer endpoint is down or returned a malformed reply."""


class RangeViolationError(StylistError):
    """A scorer returned a value outside its declared range."""


class NoFaceFoundError(StylistError):
    """No face detected; a designed dataset case, not a pipeline failure."""


class RegionNotFoundError(StylistError):
    """The masker found no region for the requested garment category."""


class ScenarioError(StylistError):
    """A mock scenario file is malformed or missing a scripted reply."""


# ---------------------------------------------------------------------------
# Feedback controller


class GeneratorFailedError(StylistError):
    """The loop's generate step failed; carries any partial outcome."""

    def __init__(self, iteration: int, partial: Optional["LoopOutcome"], cause: Exception):
        self.iteration = iteration
        self.partial = partial
        self.cause = cause
        super().__init__(f"generator failed at iteration {iteration}: {cause}")


class DiagnoserFailedError(StylistError):
    """The diagnose step failed; loops degrade rather than abort on this."""


# ---------------------------------------------------------------------------
# Designer


class SpecSheetParseError(StylistError):
    """A style expert's reply could not be turned into a valid spec sheet."""


class NoCandidatesError(StylistError):
    """Every search round for a garment came back empty or undownloadable."""

    def __init__(self, category: str, detail: str = ""):
        self.category = category
        msg = f"no usable candidates for category {category!r}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class AllExpertsFailedError(StylistError):
    """Every expert in the pool raised before producing a scored outfit."""


class ZeroScoreError(StylistError):
    """A zero alignment score reached the outfit aggregator."""


# ---------------------------------------------------------------------------
# Consultant


class AllRegionsMissingError(StylistError):
    """Every try-on candidate in a round lacked the target region."""


class StageFailedError(StylistError):
    """A try-on stage exhausted its loop with zero usable images."""

    def __init__(self, category: str, cause: Exception):
        self.category = category
        self.cause = cause
        super().__init__(f"try-on stage {category!r} failed: {cause}")


# ---------------------------------------------------------------------------
# Critic


class DescribeFailedError(StylistError):
    """The person-description reply lacked the expected tags."""


class ArtistParseError(StylistError):
    """The artist reply could not be parsed into the rubric schema."""


class SubScoreOutOfRangeError(StylistError):
    """An artist sub-score fell outside 1..10."""


# ---------------------------------------------------------------------------
# Cost model / configuration


class MissingPriceError(StylistError):
    def __init__(self, model: str):
        self.model = model
        super().__init__(f"no pricing entry for model {model!r}")


class ConfigError(StylistError):
    """The pipeline configuration is missing or inconsistent."""
