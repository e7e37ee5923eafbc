"""The HTTP surface: five protocol endpoints plus /healthz.

Error bodies are part of the wire protocol and pinned exactly:
404 {"error": "no_face"} and 404 {"error": "region_not_found"}.  Success
responses carry the analyzed image size so downscaling is auditable.
"""

from __future__ import annotations

import base64
import binascii
import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .analysis import (
    BadImageError,
    LoadedImage,
    NoFaceError,
    NoRegionError,
    REGION_BANDS,
    alignment_score,
    encode_mask_png,
    face_embedding,
    load_image,
    quality_score,
    region_mask,
    similarity_score,
)
from .config import ServiceConfig

logger = logging.getLogger(__name__)


class VqaBody(BaseModel):
    image_b64: str
    text: str


class ClipBody(BaseModel):
    image_a_b64: str
    image_b_b64: str


class ImageBody(BaseModel):
    image_b64: str


class MaskBody(BaseModel):
    image_b64: str
    category: str


def _bad_image(detail: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": "bad_image", "detail": detail})


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    token = config.bearer_token()  # fail fast on a named-but-missing variable
    app = FastAPI(title="scorer-service", docs_url=None, redoc_url=None)

    def denied(request: Request) -> JSONResponse | None:
        if not token:
            return None
        if request.headers.get("Authorization") == f"Bearer {token}":
            return None
        return JSONResponse(status_code=401, content={"error": "unauthorized"})

    def decode(field: str) -> bytes:
        try:
            return base64.b64decode(field, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise BadImageError(f"invalid base64: {exc}") from exc

    def load(field: str) -> LoadedImage:
        return load_image(decode(field), config.max_image_dim)

    @app.get("/healthz")
    def healthz() -> dict:
        return {
            "status": "ok",
            "models": dict(config.models),
            "max_image_dim": config.max_image_dim,
            "device": config.device,
        }

    @app.post("/v1/vqa")
    def vqa(body: VqaBody, request: Request):
        if (resp := denied(request)) is not None:
            return resp
        try:
            image = load(body.image_b64)
        except BadImageError as exc:
            return _bad_image(str(exc))
        return {"score": alignment_score(image, body.text), "image_size": image.size}

    @app.post("/v1/clip_ii")
    def clip_ii(body: ClipBody, request: Request):
        if (resp := denied(request)) is not None:
            return resp
        try:
            a = load(body.image_a_b64)
            b = load(body.image_b_b64)
        except BadImageError as exc:
            return _bad_image(str(exc))
        return {
            "score": similarity_score(a, b),
            "image_sizes": [a.size, b.size],
        }

    @app.post("/v1/iqa")
    def iqa(body: ImageBody, request: Request):
        if (resp := denied(request)) is not None:
            return resp
        try:
            image = load(body.image_b64)
        except BadImageError as exc:
            return _bad_image(str(exc))
        return {"score": quality_score(image), "image_size": image.size}

    @app.post("/v1/face_embed")
    def face_embed(body: ImageBody, request: Request):
        if (resp := denied(request)) is not None:
            return resp
        try:
            image = load(body.image_b64)
        except BadImageError as exc:
            return _bad_image(str(exc))
        try:
            vector = face_embedding(image)
        except NoFaceError:
            return JSONResponse(status_code=404, content={"error": "no_face"})
        return {"vector": vector, "image_size": image.size}

    @app.post("/v1/mask")
    def mask(body: MaskBody, request: Request):
        if (resp := denied(request)) is not None:
            return resp
        if body.category not in REGION_BANDS:
            return JSONResponse(
                status_code=400,
                content={"error": "unknown_category", "detail": body.category},
            )
        try:
            image = load(body.image_b64)
        except BadImageError as exc:
            return _bad_image(str(exc))
        try:
            region = region_mask(image, body.category)
        except NoRegionError:
            return JSONResponse(
                status_code=404, content={"error": "region_not_found"}
            )
        encoded = base64.b64encode(encode_mask_png(region)).decode("ascii")
        return {"mask_b64": encoded, "image_size": image.size}

    return app
