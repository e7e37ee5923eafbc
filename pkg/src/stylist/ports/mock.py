"""Scripted scenario replay for all eight ports.

A scenario is a JSON document::

    {
      "exhaustion": "repeat_last" | "error",
      "backends": ["expert1", "expert2"],
      "queues": [
        {"port": "vlm_chat", "key": "expert1", "replies": ["{...}"]},
        {"port": "vqa_score", "key": "vqa.shoes", "replies": [0.9, 0.1],
         "exhaustion": "error"}
      ]
    }

Calls are matched to queues by (port, context-key), falling back to the
wildcard key "*".  Replies are consumed in order; an exhausted queue either
repeats its last reply or errors, per the queue's (or file's) policy.

Reply payloads per port:

* vlm_chat: a string (the reply text)
* search: a list of {"image_url", "page_url"} objects
* image_edit: a list of image refs (see below), one per candidate
* vqa_score / clip_image_similarity / iqa_score: a number
* face_embed: a list of numbers, or the string "no_face"
* mask_region: "full", {"rect": [x0, y0, x1, y1]}, or an image ref
* any port: {"error": "ScorerUnavailable", "message": "..."} raises instead

Image refs are resolved in three forms: "synth:WxH:#rrggbb" (generated
solid PNG), "data:...;base64,..." (inline bytes), anything else (a path
relative to the scenario file).

Mocks never sleep and stamp wall_time 0.0 so replays are byte-identical.
"""
from __future__ import annotations

import base64
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..domain import GarmentCategory
from ..errors import (
    BackendTimeoutError,
    BackendUnavailableError,
    ContentRejectedError,
    EmptyReplyError,
    GenerationFailedError,
    InvalidImageError,
    NoFaceFoundError,
    NoResultsError,
    QuotaExceededError,
    RangeViolationError,
    RegionNotFoundError,
    ScenarioError,
    ScorerUnavailableError,
)
from ..imaging import full_mask, image_size, rect_mask, solid_png
from .base import BackendSet, CallMeter, Port, SearchResult, Telemetry

_EXHAUSTION_POLICIES = ("repeat_last", "error")

_SYNTH_REF = re.compile(r"^synth:(\d+)x(\d+):#([0-9a-fA-F]{6})$")

_ERRORS_BY_NAME = {
    "BackendUnavailable": BackendUnavailableError,
    "Timeout": BackendTimeoutError,
    "BackendTimeout": BackendTimeoutError,
    "EmptyReply": EmptyReplyError,
    "QuotaExceeded": QuotaExceededError,
    "NoResults": NoResultsError,
    "GenerationFailed": GenerationFailedError,
    "ContentRejected": ContentRejectedError,
    "ScorerUnavailable": ScorerUnavailableError,
    "NoFaceFound": NoFaceFoundError,
    "no_face": NoFaceFoundError,
    "RegionNotFound": RegionNotFoundError,
    "region_not_found": RegionNotFoundError,
    "RangeViolation": RangeViolationError,
}


def _error_class(name: str) -> type[Exception]:
    key = name.removesuffix("Error")
    if key in _ERRORS_BY_NAME:
        return _ERRORS_BY_NAME[key]
    if name in _ERRORS_BY_NAME:
        return _ERRORS_BY_NAME[name]
    raise ScenarioError(f"unknown scripted error name {name!r}")


@dataclass(frozen=True)
class _Queue:
    port: str
    key: str
    replies: tuple[Any, ...]
    exhaustion: str


@dataclass(frozen=True)
class MockScenario:
    """A parsed, validated scenario file."""

    queues: Mapping[tuple[str, str], _Queue]
    exhaustion: str = "repeat_last"
    known_backends: tuple[str, ...] = ()
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def load(cls, path: str | Path) -> "MockScenario":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc
        return cls.from_payload(payload, base_dir=path.parent)

    @classmethod
    def from_payload(
        cls, payload: Mapping[str, Any], base_dir: str | Path = "."
    ) -> "MockScenario":
        if not isinstance(payload, Mapping):
            raise ScenarioError("scenario root must be a JSON object")
        exhaustion = payload.get("exhaustion", "repeat_last")
        if exhaustion not in _EXHAUSTION_POLICIES:
            raise ScenarioError(f"unknown exhaustion policy {exhaustion!r}")
        backends = tuple(payload.get("backends", ()))
        queues: dict[tuple[str, str], _Queue] = {}
        for i, entry in enumerate(payload.get("queues", ())):
            if not isinstance(entry, Mapping):
                raise ScenarioError(f"queue #{i} is not an object")
            port = entry.get("port")
            key = entry.get("key", "*")
            replies = entry.get("replies")
            if port not in Port.ALL:
                raise ScenarioError(f"queue #{i}: unknown port {port!r}")
            if not isinstance(key, str) or not key:
                raise ScenarioError(f"queue #{i}: key must be a non-empty string")
            if not isinstance(replies, Sequence) or isinstance(replies, (str, bytes)):
                raise ScenarioError(f"queue #{i}: replies must be a list")
            if not replies:
                raise ScenarioError(f"queue #{i}: replies list is empty")
            local = entry.get("exhaustion", exhaustion)
            if local not in _EXHAUSTION_POLICIES:
                raise ScenarioError(
                    f"queue #{i}: unknown exhaustion policy {local!r}"
                )
            if (port, key) in queues:
                raise ScenarioError(f"duplicate queue for ({port}, {key})")
            queues[(port, key)] = _Queue(port, key, tuple(replies), local)
        return cls(
            queues=queues,
            exhaustion=exhaustion,
            known_backends=backends,
            base_dir=Path(base_dir),
        )

    def validate(self) -> list[str]:
        """Dry-check every queue's reply shapes and referenced files.

        Returns a list of problems; an empty list means the scenario is
        structurally sound for replay.
        """
        problems: list[str] = []
        for (port, key), queue in sorted(self.queues.items()):
            for j, reply in enumerate(queue.replies):
                where = f"{port}[{key}] reply #{j}"
                problems.extend(self._check_reply(port, reply, where))
        return problems

    def _check_reply(self, port: str, reply: Any, where: str) -> list[str]:
        if isinstance(reply, Mapping) and "error" in reply:
            try:
                _error_class(str(reply["error"]))
            except ScenarioError as exc:
                return [f"{where}: {exc}"]
            return []
        if port == Port.VLM_CHAT:
            if not isinstance(reply, str):
                return [f"{where}: vlm_chat reply must be a string"]
        elif port == Port.SEARCH:
            if not isinstance(reply, Sequence) or isinstance(reply, (str, bytes)):
                return [f"{where}: search reply must be a list of results"]
            out = []
            for item in reply:
                if (
                    not isinstance(item, Mapping)
                    or "image_url" not in item
                    or "page_url" not in item
                ):
                    out.append(f"{where}: result needs image_url and page_url")
                    continue
                out.extend(self._check_imageref(str(item["image_url"]), where))
            return out
        elif port == Port.IMAGE_EDIT:
            if not isinstance(reply, Sequence) or isinstance(reply, (str, bytes)):
                return [f"{where}: image_edit reply must be a list of image refs"]
            out = []
            for ref in reply:
                out.extend(self._check_imageref(str(ref), where))
            return out
        elif port in (Port.VQA_SCORE, Port.CLIP_IMAGE_SIMILARITY, Port.IQA_SCORE):
            if not isinstance(reply, (int, float)) or isinstance(reply, bool):
                return [f"{where}: score reply must be a number"]
            low = -1.0 if port == Port.CLIP_IMAGE_SIMILARITY else 0.0
            if not low <= float(reply) <= 1.0:
                return [f"{where}: score {reply} outside [{low:g}, 1]"]
        elif port == Port.FACE_EMBED:
            if reply == "no_face":
                return []
            if not isinstance(reply, Sequence) or isinstance(reply, (str, bytes)):
                return [f"{where}: face_embed reply must be a vector or 'no_face'"]
            if not all(isinstance(v, (int, float)) for v in reply):
                return [f"{where}: face_embed vector must be numeric"]
        elif port == Port.MASK_REGION:
            if reply == "full":
                return []
            if isinstance(reply, Mapping) and "rect" in reply:
                rect = reply["rect"]
                if not (
                    isinstance(rect, Sequence)
                    and len(rect) == 4
                    and all(isinstance(v, int) for v in rect)
                ):
                    return [f"{where}: rect must be four integers"]
                return []
            if isinstance(reply, str):
                return self._check_imageref(reply, where)
            return [f"{where}: mask reply must be 'full', a rect, or an image ref"]
        return []

    def _check_imageref(self, ref: str, where: str) -> list[str]:
        if _SYNTH_REF.match(ref) or ref.startswith("data:"):
            return []
        if not (self.base_dir / ref).is_file():
            return [f"{where}: image file not found: {ref}"]
        return []

    def resolve_imageref(self, ref: str) -> bytes:
        m = _SYNTH_REF.match(ref)
        if m:
            w, h, rgb = int(m.group(1)), int(m.group(2)), m.group(3)
            return solid_png(w, h, (int(rgb[0:2], 16), int(rgb[2:4], 16), int(rgb[4:6], 16)))
        if ref.startswith("data:"):
            _, _, payload = ref.partition(",")
            try:
                return base64.b64decode(payload)
            except ValueError as exc:
                raise InvalidImageError(f"bad data url: {exc}") from exc
        path = self.base_dir / ref
        try:
            return path.read_bytes()
        except OSError as exc:
            raise InvalidImageError(f"cannot read image {ref}: {exc}") from exc


class MockBackendSet(BackendSet):
    """Deterministic BackendSet that replays a MockScenario."""

    scorer_backend_id = "mock-scorer"
    search_backend_id = "mock-search"
    edit_backend_id = "mock-editor"

    def __init__(
        self,
        scenario: MockScenario,
        telemetry: Telemetry | None = None,
        **kwargs: Any,
    ) -> None:
        kwargs.setdefault("zero_wall_time", True)
        super().__init__(telemetry, **kwargs)
        self.scenario = scenario
        self._cursors: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()

    # -- queue mechanics ----------------------------------------------------

    def _next(self, port: str, key: str) -> Any:
        queue = self.scenario.queues.get((port, key)) or self.scenario.queues.get(
            (port, "*")
        )
        if queue is None:
            raise ScenarioError(f"no scripted replies for {port}[{key}]")
        qkey = (queue.port, queue.key)
        with self._lock:
            cursor = self._cursors.get(qkey, 0)
            if cursor < len(queue.replies):
                self._cursors[qkey] = cursor + 1
                reply = queue.replies[cursor]
            elif queue.exhaustion == "repeat_last":
                reply = queue.replies[-1]
            else:
                raise ScenarioError(f"queue {port}[{queue.key}] exhausted")
        return self._raise_if_error(reply)

    @staticmethod
    def _raise_if_error(reply: Any) -> Any:
        if isinstance(reply, Mapping) and "error" in reply:
            cls = _error_class(str(reply["error"]))
            raise cls(str(reply.get("message", reply["error"])))
        return reply

    # -- hooks --------------------------------------------------------------

    def _do_vlm_chat(
        self,
        meter: CallMeter,
        backend_id: str,
        system_prompt: str,
        user_prompt: str,
        images: tuple[bytes, ...],
        context: str,
    ) -> str:
        known = self.scenario.known_backends
        if known and backend_id not in known:
            raise BackendUnavailableError(f"unregistered backend {backend_id!r}")
        reply = self._next(Port.VLM_CHAT, context or backend_id)
        if not isinstance(reply, str):
            raise ScenarioError(
                f"vlm_chat[{context or backend_id}]: scripted reply is not text"
            )
        return reply

    def _do_search(
        self, meter: CallMeter, query: str, num_results: int, context: str
    ) -> list[SearchResult]:
        reply = self._next(Port.SEARCH, context)
        if not isinstance(reply, Sequence) or isinstance(reply, (str, bytes)):
            raise ScenarioError(f"search[{context}]: scripted reply is not a list")
        return [
            SearchResult(image_url=str(r["image_url"]), page_url=str(r["page_url"]))
            for r in reply
        ]

    def _do_image_edit(
        self,
        meter: CallMeter,
        images: tuple[bytes, ...],
        prompt: str,
        negative_terms: tuple[str, ...],
        n: int,
        context: str,
    ) -> Sequence[bytes]:
        reply = self._next(Port.IMAGE_EDIT, context)
        if not isinstance(reply, Sequence) or isinstance(reply, (str, bytes)):
            raise ScenarioError(f"image_edit[{context}]: scripted reply is not a list")
        return [self.scenario.resolve_imageref(str(ref)) for ref in reply]

    def _do_vqa_score(
        self, meter: CallMeter, image: bytes, text: str, context: str
    ) -> float:
        return float(self._next(Port.VQA_SCORE, context))

    def _do_clip_image_similarity(
        self, meter: CallMeter, image_a: bytes, image_b: bytes, context: str
    ) -> float:
        # Identical bytes are trivially self-similar; answering without
        # consuming the queue keeps scripts focused on the interesting pairs.
        if image_a == image_b:
            return 1.0
        return float(self._next(Port.CLIP_IMAGE_SIMILARITY, context))

    def _do_iqa_score(self, meter: CallMeter, image: bytes, context: str) -> float:
        return float(self._next(Port.IQA_SCORE, context))

    def _do_face_embed(
        self, meter: CallMeter, image: bytes, context: str
    ) -> Sequence[float]:
        reply = self._next(Port.FACE_EMBED, context)
        if reply == "no_face":
            raise NoFaceFoundError("scripted hidden face")
        if not isinstance(reply, Sequence) or isinstance(reply, (str, bytes)):
            raise ScenarioError(f"face_embed[{context}]: scripted reply is not a vector")
        return [float(v) for v in reply]

    def _do_mask_region(
        self, meter: CallMeter, image: bytes, category: GarmentCategory, context: str
    ) -> bytes:
        reply = self._next(Port.MASK_REGION, context)
        w, h = image_size(image)
        if reply == "full":
            return full_mask(w, h)
        if isinstance(reply, Mapping) and "rect" in reply:
            x0, y0, x1, y1 = (int(v) for v in reply["rect"])
            return rect_mask(w, h, (x0, y0, x1, y1))
        if isinstance(reply, str):
            return self.scenario.resolve_imageref(reply)
        raise ScenarioError(f"mask_region[{context}]: unsupported scripted reply")

    def fetch_image(self, url: str) -> bytes:
        return self.scenario.resolve_imageref(url)
