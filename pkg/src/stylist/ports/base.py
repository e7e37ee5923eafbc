"""Port contracts, call telemetry, and the shared enforcement wrapper.

``BackendSet`` is the abstract surface the pipeline talks to.  Its public
methods validate preconditions, enforce postconditions, and guarantee the
telemetry invariant: every call, successful or not, appends exactly one
``PortCallRecord``.  Concrete implementations only fill in the ``_do_*``
hooks.
"""
from __future__ import annotations

import abc
import math
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Sequence
from urllib.parse import urlsplit

from ..domain import GarmentCategory
from ..errors import (
    EmptyReplyError,
    GenerationFailedError,
    InvalidImageError,
    RangeViolationError,
    RegionNotFoundError,
)
from ..imaging import decode_image, image_size, mask_coverage

#: Markets the search port is allowed to return results from.
DEFAULT_ALLOWED_SITES = ("amazon.com", "taobao.com", "walmart.com", "etsy.com")

MAX_SEARCH_RESULTS = 10
MAX_EDIT_CANDIDATES = 8


class Port:
    """The eight port names, as they appear in telemetry and scenarios."""

    VLM_CHAT = "vlm_chat"
    SEARCH = "search"
    IMAGE_EDIT = "image_edit"
    VQA_SCORE = "vqa_score"
    CLIP_IMAGE_SIMILARITY = "clip_image_similarity"
    IQA_SCORE = "iqa_score"
    FACE_EMBED = "face_embed"
    MASK_REGION = "mask_region"

    ALL = (
        VLM_CHAT,
        SEARCH,
        IMAGE_EDIT,
        VQA_SCORE,
        CLIP_IMAGE_SIMILARITY,
        IQA_SCORE,
        FACE_EMBED,
        MASK_REGION,
    )


def estimate_tokens(text: str) -> int:
    """Fallback token estimate: one token per four characters, rounded up."""
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class PortCallRecord:
    """One external call, as accounted by the cost model and transcripts."""

    port: str
    tokens_in: int
    tokens_out: int
    images_in: int
    wall_time: float
    backend_id: str
    phase: str = ""
    context: str = ""
    error: str = ""

    def __post_init__(self) -> None:
        if self.tokens_in < 0 or self.tokens_out < 0 or self.images_in < 0:
            raise ValueError("telemetry counters must be non-negative")
        if self.wall_time < 0:
            raise ValueError("wall_time must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "port": self.port,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "images_in": self.images_in,
            "wall_time": self.wall_time,
            "backend_id": self.backend_id,
            "phase": self.phase,
            "context": self.context,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "PortCallRecord":
        return cls(**payload)


class Telemetry:
    """Append-only, thread-safe record channel for one run."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._records: list[PortCallRecord] = []

    def record(self, rec: PortCallRecord) -> None:
        with self._lock:
            self._records.append(rec)

    def records(self) -> tuple[PortCallRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


@dataclass(frozen=True)
class SearchResult:
    """One provider hit: the product photo and the page it sells on."""

    image_url: str
    page_url: str


@dataclass
class CallMeter:
    """Mutable per-call usage that ``_do_*`` hooks may overwrite.

    Pre-filled with character-count estimates; live adapters replace the
    token fields when the provider reports real usage.
    """

    tokens_in: int = 0
    tokens_out: int = 0
    images_in: int = 0
    extra: dict[str, Any] = field(default_factory=dict)


def host_matches(url: str, site: str) -> bool:
    host = urlsplit(url).netloc.lower().rsplit("@", 1)[-1].split(":", 1)[0]
    site = site.lower()
    return host == site or host.endswith("." + site)


class BackendSet(abc.ABC):
    """Abstract port bundle with contract enforcement and telemetry.

    ``zero_wall_time`` pins every record's wall_time to 0.0, which mock
    runs use to keep transcripts byte-identical across replays.
    """

    def __init__(
        self,
        telemetry: Telemetry | None = None,
        *,
        allowed_sites: Sequence[str] = DEFAULT_ALLOWED_SITES,
        mask_min_coverage: float = 0.001,
        zero_wall_time: bool = False,
    ) -> None:
        self.telemetry = telemetry if telemetry is not None else Telemetry()
        self.allowed_sites = tuple(allowed_sites)
        self.mask_min_coverage = mask_min_coverage
        self.zero_wall_time = zero_wall_time

    # -- public port surface ------------------------------------------------

    def vlm_chat(
        self,
        backend_id: str,
        system_prompt: str,
        user_prompt: str,
        images: Sequence[bytes] = (),
        *,
        phase: str = "",
        context: str = "",
    ) -> str:
        images = tuple(images)
        with self._recorded(
            Port.VLM_CHAT, backend_id, phase, context
        ) as meter:
            meter.tokens_in = estimate_tokens(system_prompt) + estimate_tokens(
                user_prompt
            )
            meter.images_in = len(images)
            reply = self._do_vlm_chat(
                meter, backend_id, system_prompt, user_prompt, images, context
            )
            if not meter.tokens_out:
                meter.tokens_out = estimate_tokens(reply)
            if not reply.strip():
                raise EmptyReplyError(f"backend {backend_id} returned no text")
            return reply

    def search(
        self,
        query: str,
        num_results: int,
        *,
        phase: str = "",
        context: str = "",
    ) -> list[SearchResult]:
        if not query.strip():
            raise ValueError("search query must be non-empty")
        if not 1 <= num_results <= MAX_SEARCH_RESULTS:
            raise ValueError(
                f"num_results must be in 1..{MAX_SEARCH_RESULTS}, got {num_results}"
            )
        with self._recorded(Port.SEARCH, self.search_backend_id, phase, context) as meter:
            meter.tokens_in = estimate_tokens(query)
            results = self._do_search(meter, query, num_results, context)
            if self.allowed_sites:
                results = [
                    r
                    for r in results
                    if any(host_matches(r.page_url, s) for s in self.allowed_sites)
                ]
            return results[:num_results]

    def image_edit(
        self,
        images: Sequence[bytes],
        prompt: str,
        negative_terms: Sequence[str],
        n: int,
        *,
        phase: str = "",
        context: str = "",
    ) -> list[bytes]:
        images = tuple(images)
        if not images:
            raise ValueError("image_edit needs at least one input image")
        if not 1 <= n <= MAX_EDIT_CANDIDATES:
            raise ValueError(f"n must be in 1..{MAX_EDIT_CANDIDATES}, got {n}")
        with self._recorded(
            Port.IMAGE_EDIT, self.edit_backend_id, phase, context
        ) as meter:
            meter.tokens_in = estimate_tokens(prompt) + sum(
                estimate_tokens(t) for t in negative_terms
            )
            meter.images_in = len(images)
            out = self._do_image_edit(
                meter, images, prompt, tuple(negative_terms), n, context
            )
            if len(out) != n:
                raise GenerationFailedError(
                    f"editor returned {len(out)} images, wanted {n}"
                )
            return list(out)

    def vqa_score(
        self, image: bytes, text: str, *, phase: str = "", context: str = ""
    ) -> float:
        if not text.strip():
            raise ValueError("vqa text must be non-empty")
        with self._recorded(
            Port.VQA_SCORE, self.scorer_backend_id, phase, context
        ) as meter:
            meter.tokens_in = estimate_tokens(text)
            meter.images_in = 1
            score = float(self._do_vqa_score(meter, image, text, context))
            if not 0.0 <= score <= 1.0:
                raise RangeViolationError(f"vqa score {score} outside [0, 1]")
            return score

    def clip_image_similarity(
        self, image_a: bytes, image_b: bytes, *, phase: str = "", context: str = ""
    ) -> float:
        decode_image(image_a)
        decode_image(image_b)
        with self._recorded(
            Port.CLIP_IMAGE_SIMILARITY, self.scorer_backend_id, phase, context
        ) as meter:
            meter.images_in = 2
            score = float(
                self._do_clip_image_similarity(meter, image_a, image_b, context)
            )
            if not -1.0 <= score <= 1.0:
                raise RangeViolationError(f"similarity {score} outside [-1, 1]")
            return score

    def iqa_score(self, image: bytes, *, phase: str = "", context: str = "") -> float:
        with self._recorded(
            Port.IQA_SCORE, self.scorer_backend_id, phase, context
        ) as meter:
            meter.images_in = 1
            score = float(self._do_iqa_score(meter, image, context))
            if not 0.0 <= score <= 1.0:
                raise RangeViolationError(f"iqa score {score} outside [0, 1]")
            return score

    def face_embed(
        self, image: bytes, *, phase: str = "", context: str = ""
    ) -> tuple[float, ...]:
        decode_image(image)
        with self._recorded(
            Port.FACE_EMBED, self.scorer_backend_id, phase, context
        ) as meter:
            meter.images_in = 1
            vector = tuple(float(v) for v in self._do_face_embed(meter, image, context))
            norm = math.sqrt(sum(v * v for v in vector))
            if not vector or norm == 0.0:
                raise RangeViolationError("face embedding has zero norm")
            return tuple(v / norm for v in vector)

    def mask_region(
        self,
        image: bytes,
        category: GarmentCategory,
        *,
        phase: str = "",
        context: str = "",
    ) -> bytes:
        if not isinstance(category, GarmentCategory):
            raise ValueError(f"category must be a GarmentCategory, got {category!r}")
        with self._recorded(
            Port.MASK_REGION, self.scorer_backend_id, phase, context
        ) as meter:
            meter.images_in = 1
            mask = self._do_mask_region(meter, image, category, context)
            if image_size(mask) != image_size(image):
                raise InvalidImageError(
                    "mask dimensions do not match image dimensions"
                )
            if mask_coverage(mask) < self.mask_min_coverage:
                raise RegionNotFoundError(
                    f"mask for {category.value} below minimum coverage"
                )
            return mask

    # -- non-port plumbing ---------------------------------------------------

    @abc.abstractmethod
    def fetch_image(self, url: str) -> bytes:
        """Download a candidate image.  Not one of the eight ports: no
        telemetry record; the cost model folds downloads into search time."""

    # -- identity of the non-VLM backends (for telemetry) --------------------

    search_backend_id = "search"
    edit_backend_id = "image_edit"
    scorer_backend_id = "scorer"

    # -- implementation hooks ------------------------------------------------

    @abc.abstractmethod
    def _do_vlm_chat(
        self,
        meter: CallMeter,
        backend_id: str,
        system_prompt: str,
        user_prompt: str,
        images: tuple[bytes, ...],
        context: str,
    ) -> str: ...

    @abc.abstractmethod
    def _do_search(
        self, meter: CallMeter, query: str, num_results: int, context: str
    ) -> list[SearchResult]: ...

    @abc.abstractmethod
    def _do_image_edit(
        self,
        meter: CallMeter,
        images: tuple[bytes, ...],
        prompt: str,
        negative_terms: tuple[str, ...],
        n: int,
        context: str,
    ) -> Sequence[bytes]: ...

    @abc.abstractmethod
    def _do_vqa_score(
        self, meter: CallMeter, image: bytes, text: str, context: str
    ) -> float: ...

    @abc.abstractmethod
    def _do_clip_image_similarity(
        self, meter: CallMeter, image_a: bytes, image_b: bytes, context: str
    ) -> float: ...

    @abc.abstractmethod
    def _do_iqa_score(self, meter: CallMeter, image: bytes, context: str) -> float: ...

    @abc.abstractmethod
    def _do_face_embed(
        self, meter: CallMeter, image: bytes, context: str
    ) -> Sequence[float]: ...

    @abc.abstractmethod
    def _do_mask_region(
        self, meter: CallMeter, image: bytes, category: GarmentCategory, context: str
    ) -> bytes: ...

    # -- telemetry ----------------------------------------------------------

    @contextmanager
    def _recorded(
        self, port: str, backend_id: str, phase: str, context: str
    ) -> Iterator[CallMeter]:
        meter = CallMeter()
        started = time.monotonic()
        error = ""
        try:
            yield meter
        except BaseException as exc:
            error = type(exc).__name__
            raise
        finally:
            wall = 0.0 if self.zero_wall_time else time.monotonic() - started
            self.telemetry.record(
                PortCallRecord(
                    port=port,
                    tokens_in=meter.tokens_in,
                    tokens_out=meter.tokens_out,
                    images_in=meter.images_in,
                    wall_time=wall,
                    backend_id=backend_id,
                    phase=phase,
                    context=context,
                    error=error,
                )
            )
