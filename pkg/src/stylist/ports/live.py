"""HTTP adapters for the eight ports.

One adapter class speaks to four backend kinds: chat-completions VLM
endpoints, a custom-search JSON API, an image-edit endpoint, and the
scorer service protocol (/v1/vqa, /v1/clip_ii, /v1/iqa, /v1/face_embed,
/v1/mask).  Credentials are read from environment variables named in the
backend config, never from the config itself.  Adapters never retry:
retry policy belongs to the feedback loops so iteration counts stay
truthful.
"""
from __future__ import annotations

import base64
import os
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import httpx

from ..domain import GarmentCategory
from ..errors import (
    BackendTimeoutError,
    BackendUnavailableError,
    ConfigError,
    ContentRejectedError,
    GenerationFailedError,
    InvalidImageError,
    NoFaceFoundError,
    NoResultsError,
    QuotaExceededError,
    RegionNotFoundError,
    ScorerUnavailableError,
)
from .base import BackendSet, CallMeter, SearchResult, Telemetry

VLM_KIND = "vlm"
SEARCH_KIND = "search"
EDIT_KIND = "image_edit"
SCORER_KIND = "scorer"


@dataclass(frozen=True)
class HttpBackend:
    """Where one backend lives and how to authenticate against it."""

    backend_id: str
    kind: str
    endpoint: str
    model: str = ""
    credential_env: str = ""

    def api_key(self) -> str:
        if not self.credential_env:
            return ""
        key = os.environ.get(self.credential_env)
        if key is None:
            raise ConfigError(
                f"backend {self.backend_id}: environment variable "
                f"{self.credential_env} is not set"
            )
        return key


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _data_url(image: bytes) -> str:
    return "data:image/png;base64," + _b64(image)


class LiveBackendSet(BackendSet):
    """BackendSet over real HTTP providers."""

    def __init__(
        self,
        backends: Sequence[HttpBackend],
        telemetry: Telemetry | None = None,
        *,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        **kwargs: Any,
    ) -> None:
        super().__init__(telemetry, **kwargs)
        self._vlms: dict[str, HttpBackend] = {}
        self._search_backend: HttpBackend | None = None
        self._edit_backend: HttpBackend | None = None
        self._scorer_backend: HttpBackend | None = None
        for b in backends:
            if b.kind == VLM_KIND:
                self._vlms[b.backend_id] = b
            elif b.kind == SEARCH_KIND:
                self._search_backend = b
            elif b.kind == EDIT_KIND:
                self._edit_backend = b
            elif b.kind == SCORER_KIND:
                self._scorer_backend = b
            else:
                raise ConfigError(f"backend {b.backend_id}: unknown kind {b.kind!r}")
            b.api_key()  # fail fast on a missing credential variable
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    # -- backend ids used in telemetry --------------------------------------

    @property
    def search_backend_id(self) -> str:  # type: ignore[override]
        return self._search_backend.backend_id if self._search_backend else "search"

    @property
    def edit_backend_id(self) -> str:  # type: ignore[override]
        return self._edit_backend.backend_id if self._edit_backend else "image_edit"

    @property
    def scorer_backend_id(self) -> str:  # type: ignore[override]
        return self._scorer_backend.backend_id if self._scorer_backend else "scorer"

    # -- request plumbing ----------------------------------------------------

    def _request(
        self,
        backend: HttpBackend,
        method: str,
        url: str,
        *,
        json_body: Any | None = None,
        params: Mapping[str, Any] | None = None,
    ) -> httpx.Response:
        headers = {}
        key = backend.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            return self._client.request(
                method, url, json=json_body, params=params, headers=headers
            )
        except httpx.TimeoutException as exc:
            raise BackendTimeoutError(f"{backend.backend_id}: {exc}") from exc
        except httpx.TransportError as exc:
            raise BackendUnavailableError(f"{backend.backend_id}: {exc}") from exc

    @staticmethod
    def _json(resp: httpx.Response, backend: HttpBackend) -> Any:
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendUnavailableError(
                f"{backend.backend_id}: non-JSON reply (HTTP {resp.status_code})"
            ) from exc

    def _require_backend(
        self, backend: HttpBackend | None, kind: str
    ) -> HttpBackend:
        if backend is None:
            raise ConfigError(f"no {kind} backend configured")
        return backend

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
        backend = self._vlms.get(backend_id)
        if backend is None:
            raise BackendUnavailableError(f"unregistered backend {backend_id!r}")
        content: list[dict[str, Any]] = [{"type": "text", "text": user_prompt}]
        for image in images:
            content.append(
                {"type": "image_url", "image_url": {"url": _data_url(image)}}
            )
        body = {
            "model": backend.model or backend.backend_id,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": content},
            ],
        }
        resp = self._request(backend, "POST", backend.endpoint, json_body=body)
        if resp.status_code == 429:
            raise QuotaExceededError(f"{backend_id}: rate limited")
        if resp.status_code >= 400:
            raise BackendUnavailableError(
                f"{backend_id}: HTTP {resp.status_code}"
            )
        payload = self._json(resp, backend)
        try:
            reply = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailableError(
                f"{backend_id}: malformed chat reply"
            ) from exc
        usage = payload.get("usage") or {}
        # Prefer provider-reported token counts over the chars/4 estimate.
        if isinstance(usage.get("prompt_tokens"), int):
            meter.tokens_in = usage["prompt_tokens"]
        if isinstance(usage.get("completion_tokens"), int):
            meter.tokens_out = usage["completion_tokens"]
        return reply if isinstance(reply, str) else ""

    def _do_search(
        self, meter: CallMeter, query: str, num_results: int, context: str
    ) -> list[SearchResult]:
        backend = self._require_backend(self._search_backend, SEARCH_KIND)
        resp = self._request(
            backend,
            "GET",
            backend.endpoint,
            params={"q": query, "num": num_results, "searchType": "image"},
        )
        if resp.status_code == 429:
            raise QuotaExceededError("search: rate limited")
        if resp.status_code >= 400:
            raise NoResultsError(f"search provider error: HTTP {resp.status_code}")
        payload = self._json(resp, backend)
        if "error" in payload:
            raise NoResultsError(f"search provider error: {payload['error']}")
        results: list[SearchResult] = []
        for item in payload.get("items", []):
            image_url = item.get("link", "")
            page_url = (item.get("image") or {}).get("contextLink", "")
            if image_url and page_url:
                results.append(SearchResult(image_url=image_url, page_url=page_url))
        return results

    def _do_image_edit(
        self,
        meter: CallMeter,
        images: tuple[bytes, ...],
        prompt: str,
        negative_terms: tuple[str, ...],
        n: int,
        context: str,
    ) -> Sequence[bytes]:
        backend = self._require_backend(self._edit_backend, EDIT_KIND)
        body = {
            "model": backend.model or backend.backend_id,
            "prompt": prompt,
            "negative_terms": list(negative_terms),
            "images": [_b64(img) for img in images],
            "n": n,
        }
        resp = self._request(backend, "POST", backend.endpoint, json_body=body)
        if resp.status_code >= 400:
            payload = self._json(resp, backend) if resp.content else {}
            detail = str(payload.get("error", f"HTTP {resp.status_code}"))
            if "content" in detail.lower() and "reject" in detail.lower():
                raise ContentRejectedError(detail)
            raise GenerationFailedError(detail)
        payload = self._json(resp, backend)
        try:
            return [base64.b64decode(img) for img in payload["images"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise GenerationFailedError("malformed editor reply") from exc

    # -- scorer protocol -----------------------------------------------------

    def _scorer_post(self, path: str, body: Mapping[str, Any]) -> Mapping[str, Any]:
        backend = self._require_backend(self._scorer_backend, SCORER_KIND)
        url = backend.endpoint.rstrip("/") + path
        resp = self._request(backend, "POST", url, json_body=body)
        payload = self._json(resp, backend) if resp.content else {}
        if resp.status_code == 404 and isinstance(payload, Mapping):
            error = payload.get("error", "")
            if error == "no_face":
                raise NoFaceFoundError("scorer reports no detectable face")
            if error == "region_not_found":
                raise RegionNotFoundError("scorer reports region not found")
        if resp.status_code >= 400:
            raise ScorerUnavailableError(
                f"scorer {path}: HTTP {resp.status_code} {payload!r}"
            )
        if not isinstance(payload, Mapping):
            raise ScorerUnavailableError(f"scorer {path}: malformed reply")
        return payload

    def _do_vqa_score(
        self, meter: CallMeter, image: bytes, text: str, context: str
    ) -> float:
        payload = self._scorer_post("/v1/vqa", {"image_b64": _b64(image), "text": text})
        return float(payload["score"])

    def _do_clip_image_similarity(
        self, meter: CallMeter, image_a: bytes, image_b: bytes, context: str
    ) -> float:
        payload = self._scorer_post(
            "/v1/clip_ii",
            {"image_a_b64": _b64(image_a), "image_b_b64": _b64(image_b)},
        )
        return float(payload["score"])

    def _do_iqa_score(self, meter: CallMeter, image: bytes, context: str) -> float:
        payload = self._scorer_post("/v1/iqa", {"image_b64": _b64(image)})
        return float(payload["score"])

    def _do_face_embed(
        self, meter: CallMeter, image: bytes, context: str
    ) -> Sequence[float]:
        payload = self._scorer_post("/v1/face_embed", {"image_b64": _b64(image)})
        vector = payload.get("vector")
        if not isinstance(vector, Sequence):
            raise ScorerUnavailableError("face_embed: reply lacks a vector")
        return [float(v) for v in vector]

    def _do_mask_region(
        self, meter: CallMeter, image: bytes, category: GarmentCategory, context: str
    ) -> bytes:
        payload = self._scorer_post(
            "/v1/mask", {"image_b64": _b64(image), "category": category.value}
        )
        try:
            return base64.b64decode(payload["mask_b64"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerUnavailableError("mask: malformed reply") from exc

    def fetch_image(self, url: str) -> bytes:
        try:
            resp = self._client.get(url)
        except httpx.TransportError as exc:
            raise InvalidImageError(f"download failed: {exc}") from exc
        if resp.status_code >= 400:
            raise InvalidImageError(f"download failed: HTTP {resp.status_code}")
        return resp.content
