"""Scorer wire-protocol conformance suite.

Every test here talks through the package's own HTTP adapter, so what is
checked is exactly what the pipeline relies on.  By default the requests
are answered by an in-process reference responder; set STYLIST_SCORER_URL
to point the identical assertions at a running scorer service instead
(that is how a service implementation proves compatibility).

Fixture semantics any conforming service must share:

* A perfectly uniform image contains neither a detectable face nor any
  garment region -> 404 with the pinned error bodies.
* The drawn portrait and full-body figure below are accepted: the
  portrait has a findable face, the figure has a region for every
  garment category.
"""

import base64
import hashlib
import io
import json
import math
import os
import zlib
from types import SimpleNamespace

import httpx
import pytest
from PIL import Image, ImageDraw

from stylist.domain import GarmentCategory
from stylist.errors import NoFaceFoundError, RegionNotFoundError
from stylist.ports import HttpBackend, LiveBackendSet

SCORER_URL = os.environ.get("STYLIST_SCORER_URL", "")


# ---------------------------------------------------------------------------
# fixture images (pure PIL, deterministic)


def _png(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, "PNG")
    return buf.getvalue()


def draw_portrait(skin=(224, 188, 158), shirt=(60, 80, 120)) -> bytes:
    """A frontal face: skin-tone oval, dark eyes and brows, mouth."""
    im = Image.new("RGB", (200, 240), (148, 152, 158))
    d = ImageDraw.Draw(im)
    d.ellipse([36, 24, 164, 196], fill=skin)
    for cx in (78, 122):
        d.ellipse([cx - 16, 86, cx + 16, 106], fill=(245, 240, 235))
        d.ellipse([cx - 7, 89, cx + 7, 103], fill=(25, 20, 18))
        d.rectangle([cx - 17, 72, cx + 17, 80], fill=(55, 40, 30))
    d.rectangle([92, 104, 108, 140], fill=(205, 168, 138))
    d.ellipse([72, 152, 128, 170], fill=(140, 60, 52))
    d.rectangle([52, 196, 148, 240], fill=shirt)
    return _png(im)


def draw_figure() -> bytes:
    """A full standing figure: face, torso, arms, legs, shoes."""
    im = Image.new("RGB", (160, 320), (150, 154, 160))
    d = ImageDraw.Draw(im)
    skin = (221, 184, 153)
    d.ellipse([55, 14, 105, 74], fill=skin)  # head
    for cx in (71, 89):
        d.ellipse([cx - 5, 36, cx + 5, 44], fill=(30, 24, 20))
    d.ellipse([68, 54, 92, 62], fill=(150, 66, 58))  # mouth
    d.rectangle([72, 74, 88, 84], fill=skin)  # neck
    d.rectangle([44, 84, 116, 180], fill=(70, 96, 150))  # shirt
    d.rectangle([28, 88, 44, 170], fill=skin)  # arms
    d.rectangle([116, 88, 132, 170], fill=skin)
    d.rectangle([48, 180, 112, 272], fill=(52, 48, 58))  # trousers
    d.rectangle([48, 272, 76, 298], fill=(235, 232, 226))  # shoes
    d.rectangle([84, 272, 112, 298], fill=(235, 232, 226))
    return _png(im)


def uniform_texture() -> bytes:
    return _png(Image.new("RGB", (96, 96), (140, 140, 140)))


PORTRAIT = draw_portrait()
OTHER_PORTRAIT = draw_portrait(skin=(178, 134, 108), shirt=(120, 40, 40))
FIGURE = draw_figure()
UNIFORM = uniform_texture()


# ---------------------------------------------------------------------------
# in-process reference responder


def _unit(data: bytes) -> float:
    return (zlib.crc32(data) % 1_000_000) / 1_000_000


def _is_uniform(image: bytes) -> bool:
    with Image.open(io.BytesIO(image)) as im:
        return all(lo == hi for lo, hi in im.convert("RGB").getextrema())


def _reference_embed(image: bytes) -> list[float]:
    raw = hashlib.sha256(image).digest()[:8]
    centered = [b - 127.5 for b in raw]
    norm = math.sqrt(sum(c * c for c in centered))
    return [c / norm for c in centered]


def _reference_mask(image: bytes, category: str) -> bytes:
    with Image.open(io.BytesIO(image)) as im:
        width, height = im.size
    rank = [c.value for c in GarmentCategory].index(category)
    band = height // 8 or 1
    mask = Image.new("L", (width, height), 0)
    ImageDraw.Draw(mask).rectangle(
        [0, rank * band, width, min(height, (rank + 1) * band)], fill=255
    )
    return _png(mask)


def reference_responder(request: httpx.Request) -> httpx.Response:
    if request.url.path == "/healthz":
        return httpx.Response(
            200,
            json={
                "status": "ok",
                "models": {
                    "vqa": "reference-crc",
                    "clip_ii": "reference-crc",
                    "iqa": "reference-crc",
                    "face_embed": "reference-sha",
                    "mask": "reference-band",
                },
            },
        )
    body = json.loads(request.content)
    path = request.url.path
    if path == "/v1/vqa":
        image = base64.b64decode(body["image_b64"])
        return httpx.Response(
            200, json={"score": _unit(image + body["text"].encode())}
        )
    if path == "/v1/clip_ii":
        a = base64.b64decode(body["image_a_b64"])
        b = base64.b64decode(body["image_b_b64"])
        if a == b:
            return httpx.Response(200, json={"score": 1.0})
        first, second = sorted((a, b))
        return httpx.Response(200, json={"score": 0.98 * _unit(first + second)})
    if path == "/v1/iqa":
        image = base64.b64decode(body["image_b64"])
        return httpx.Response(200, json={"score": _unit(b"iqa" + image)})
    if path == "/v1/face_embed":
        image = base64.b64decode(body["image_b64"])
        if _is_uniform(image):
            return httpx.Response(404, json={"error": "no_face"})
        return httpx.Response(200, json={"vector": _reference_embed(image)})
    if path == "/v1/mask":
        image = base64.b64decode(body["image_b64"])
        if _is_uniform(image):
            return httpx.Response(404, json={"error": "region_not_found"})
        mask = _reference_mask(image, body["category"])
        return httpx.Response(
            200, json={"mask_b64": base64.b64encode(mask).decode("ascii")}
        )
    return httpx.Response(404, json={"error": f"unknown path {path}"})


# ---------------------------------------------------------------------------
# rig


@pytest.fixture(scope="module")
def rig():
    base = SCORER_URL or "http://scorer.invalid"
    transport = None if SCORER_URL else httpx.MockTransport(reference_responder)
    backends = LiveBackendSet(
        [HttpBackend("scorer-under-test", "scorer", base)],
        transport=transport,
        timeout=30.0,
    )
    raw = httpx.Client(base_url=base, transport=transport, timeout=30.0)
    yield SimpleNamespace(backends=backends, raw=raw)
    raw.close()
    backends.close()


# ---------------------------------------------------------------------------
# conformance assertions


def test_vqa_score_is_unit_interval_and_deterministic(rig):
    first = rig.backends.vqa_score(PORTRAIT, "a drawing of a person")
    again = rig.backends.vqa_score(PORTRAIT, "a drawing of a person")
    assert 0.0 <= first <= 1.0
    assert first == again


def test_identical_images_score_near_one(rig):
    score = rig.backends.clip_image_similarity(FIGURE, FIGURE)
    assert score >= 0.99


def test_similarity_is_symmetric_and_bounded(rig):
    ab = rig.backends.clip_image_similarity(PORTRAIT, OTHER_PORTRAIT)
    ba = rig.backends.clip_image_similarity(OTHER_PORTRAIT, PORTRAIT)
    assert -1.0 <= ab <= 1.0
    assert abs(ab - ba) <= 1e-6


def test_iqa_is_unit_interval_and_deterministic(rig):
    first = rig.backends.iqa_score(FIGURE)
    again = rig.backends.iqa_score(FIGURE)
    assert 0.0 <= first <= 1.0
    assert first == again


def test_face_embedding_is_unit_norm_and_deterministic(rig):
    vector = rig.backends.face_embed(PORTRAIT)
    again = rig.backends.face_embed(PORTRAIT)
    assert len(vector) >= 2
    norm = math.sqrt(sum(v * v for v in vector))
    assert abs(norm - 1.0) <= 1e-5
    assert vector == again


def test_uniform_image_has_no_face(rig):
    with pytest.raises(NoFaceFoundError):
        rig.backends.face_embed(UNIFORM)


def test_mask_exists_for_every_category_on_a_figure(rig):
    with Image.open(io.BytesIO(FIGURE)) as im:
        source_size = im.size
    for category in GarmentCategory:
        mask = rig.backends.mask_region(FIGURE, category)
        with Image.open(io.BytesIO(mask)) as im:
            assert im.size[0] <= source_size[0]
            assert im.size[1] <= source_size[1]
            # The mask must select something: at least one non-zero pixel.
            assert im.convert("L").getextrema()[1] > 0, category.value


def test_uniform_image_has_no_garment_region(rig):
    with pytest.raises(RegionNotFoundError):
        rig.backends.mask_region(UNIFORM, GarmentCategory.UPPER_BODY)


def test_health_endpoint_reports_model_inventory(rig):
    resp = rig.raw.get("/healthz")
    assert resp.status_code == 200
    payload = resp.json()
    assert payload["status"] == "ok"
    models = payload["models"]
    assert set(models) >= {"vqa", "clip_ii", "iqa", "face_embed", "mask"}
    assert all(isinstance(v, str) and v for v in models.values())
