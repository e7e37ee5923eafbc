"""Classical-vision analyzers behind the five scorer endpoints.

Everything here is deterministic and model-free: the same bytes always
produce the same score, which is what makes the service usable as a drop-in
for scripted mocks in integration runs.  The analyzers trade perceptual
fidelity for transparency; /healthz advertises their ids so downstream
reports record what actually scored them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np


class BadImageError(ValueError):
    """Payload bytes that do not decode to an image."""


class NoFaceError(Exception):
    pass


class NoRegionError(Exception):
    pass


@dataclass(frozen=True)
class LoadedImage:
    """Decoded pixels plus the size they were analyzed at."""

    bgr: np.ndarray

    @property
    def size(self) -> tuple[int, int]:
        h, w = self.bgr.shape[:2]
        return (w, h)


def load_image(data: bytes, max_dim: int) -> LoadedImage:
    """Decode and, when the long side exceeds max_dim, downscale
    preserving aspect ratio."""
    if not data:
        raise BadImageError("empty image payload")
    array = np.frombuffer(data, dtype=np.uint8)
    bgr = cv2.imdecode(array, cv2.IMREAD_COLOR)
    if bgr is None:
        raise BadImageError("bytes do not decode to an image")
    h, w = bgr.shape[:2]
    long_side = max(h, w)
    if long_side > max_dim:
        scale = max_dim / long_side
        bgr = cv2.resize(
            bgr,
            (max(1, round(w * scale)), max(1, round(h * scale))),
            interpolation=cv2.INTER_AREA,
        )
    return LoadedImage(bgr)


# ---------------------------------------------------------------------------
# image quality


def quality_score(image: LoadedImage) -> float:
    """No-reference quality: sharpness, contrast, exposure, colorfulness.

    Each component is squashed into [0, 1] and the blend stays there.
    """
    gray = cv2.cvtColor(image.bgr, cv2.COLOR_BGR2GRAY).astype(np.float64) / 255.0
    sharp_var = float(cv2.Laplacian(gray, cv2.CV_64F).var())
    sharpness = sharp_var / (sharp_var + 0.01)
    contrast = min(1.0, 2.0 * float(gray.std()))
    exposure = 1.0 - min(1.0, 2.0 * abs(float(gray.mean()) - 0.5))

    b, g, r = (image.bgr[:, :, i].astype(np.float64) for i in range(3))
    rg = r - g
    yb = 0.5 * (r + g) - b
    spread = math.sqrt(float(rg.var()) + float(yb.var()))
    center = math.sqrt(float(rg.mean()) ** 2 + float(yb.mean()) ** 2)
    colorfulness = spread + 0.3 * center
    colorful = colorfulness / (colorfulness + 30.0)

    score = (
        0.35 * sharpness + 0.25 * contrast + 0.2 * exposure + 0.2 * colorful
    )
    return max(0.0, min(1.0, score))


# ---------------------------------------------------------------------------
# image-image similarity


def _descriptor(image: LoadedImage) -> np.ndarray:
    parts = []
    for channel in range(3):
        hist = cv2.calcHist([image.bgr], [channel], None, [8], [0, 256])
        total = float(hist.sum()) or 1.0
        parts.append(hist.flatten() / total)
    thumb = cv2.resize(
        cv2.cvtColor(image.bgr, cv2.COLOR_BGR2GRAY),
        (8, 8),
        interpolation=cv2.INTER_AREA,
    )
    parts.append(thumb.flatten().astype(np.float64) / 255.0)
    return np.concatenate(parts)


def similarity_score(a: LoadedImage, b: LoadedImage) -> float:
    """Cosine similarity of color-histogram + thumbnail descriptors.

    Identical inputs score exactly 1.0; the descriptor is non-negative,
    so the range is [0, 1] within the protocol's [-1, 1]."""
    da, db = _descriptor(a), _descriptor(b)
    na, nb = float(np.linalg.norm(da)), float(np.linalg.norm(db))
    if na == 0.0 or nb == 0.0:
        return 0.0
    cosine = float(np.dot(da, db) / (na * nb))
    return max(-1.0, min(1.0, cosine))


# ---------------------------------------------------------------------------
# text-image alignment

# RGB anchors for the color vocabulary that dominates garment wording.
_COLOR_ANCHORS = {
    "white": (245, 245, 245),
    "cream": (245, 240, 220),
    "ivory": (245, 240, 220),
    "black": (20, 20, 20),
    "grey": (128, 128, 128),
    "gray": (128, 128, 128),
    "silver": (190, 190, 195),
    "red": (200, 40, 40),
    "maroon": (110, 30, 40),
    "pink": (230, 130, 170),
    "orange": (230, 140, 30),
    "yellow": (230, 200, 40),
    "gold": (212, 175, 55),
    "green": (40, 160, 70),
    "emerald": (40, 150, 100),
    "olive": (110, 110, 50),
    "teal": (25, 120, 120),
    "blue": (50, 80, 200),
    "navy": (25, 35, 90),
    "denim": (60, 90, 140),
    "purple": (130, 60, 160),
    "brown": (130, 90, 50),
    "beige": (200, 175, 140),
    "tan": (200, 175, 140),
    "khaki": (195, 176, 145),
}
_ANCHOR_RADIUS = 75.0
# Below this fraction a color match is incidental (lips, logos), not a
# garment, and must not count as alignment evidence.
_COVERAGE_FLOOR = 0.02


def _color_coverage(image: LoadedImage, anchor: tuple[int, int, int]) -> float:
    rgb = image.bgr[:, :, ::-1].astype(np.float64)
    target = np.array(anchor, dtype=np.float64)
    distance = np.linalg.norm(rgb - target, axis=2)
    coverage = float((distance <= _ANCHOR_RADIUS).mean())
    return coverage if coverage >= _COVERAGE_FLOOR else 0.0


def alignment_score(image: LoadedImage, text: str) -> float:
    """How well the image matches the text, by color-word coverage.

    Texts with no known color word get a neutral 0.5 alignment; either
    way the final score blends in the quality composite so degenerate
    images never score high.
    """
    words = {w.strip(".,;:!?'\"()").lower() for w in text.split()}
    anchors = [_COLOR_ANCHORS[w] for w in words if w in _COLOR_ANCHORS]
    if anchors:
        coverage = max(_color_coverage(image, anchor) for anchor in anchors)
        alignment = math.sqrt(coverage)
    else:
        alignment = 0.5
    score = 0.5 * alignment + 0.5 * quality_score(image)
    return max(0.0, min(1.0, score))


# ---------------------------------------------------------------------------
# face detection and embedding

# Classic YCrCb skin gates; faces are skin blobs with plausible aspect
# ratio and dark (eye/brow) evidence in their upper half.
_CR_RANGE = (135, 180)
_CB_RANGE = (85, 135)
_MIN_LUMA = 40
_MIN_AREA_FRACTION = 0.01
_ASPECT_RANGE = (0.75, 2.5)
_DARK_LUMA = 80
_MIN_DARK_FRACTION = 0.01

EMBED_SIDE = 16


def _skin_mask(image: LoadedImage) -> np.ndarray:
    ycrcb = cv2.cvtColor(image.bgr, cv2.COLOR_BGR2YCrCb)
    y, cr, cb = ycrcb[:, :, 0], ycrcb[:, :, 1], ycrcb[:, :, 2]
    mask = (
        (y > _MIN_LUMA)
        & (cr >= _CR_RANGE[0])
        & (cr <= _CR_RANGE[1])
        & (cb >= _CB_RANGE[0])
        & (cb <= _CB_RANGE[1])
    )
    return mask.astype(np.uint8)


def find_face(image: LoadedImage) -> tuple[int, int, int, int]:
    """Locate one face as (x, y, w, h) or raise NoFaceError.

    Components are tried largest-first; the first one passing the area,
    aspect, and eye-darkness gates wins.
    """
    mask = _skin_mask(image)
    count, labels, stats, _ = cv2.connectedComponentsWithStats(mask)
    h, w = mask.shape
    min_area = max(64.0, _MIN_AREA_FRACTION * h * w)
    gray = cv2.cvtColor(image.bgr, cv2.COLOR_BGR2GRAY)

    order = sorted(
        range(1, count),
        key=lambda i: int(stats[i, cv2.CC_STAT_AREA]),
        reverse=True,
    )
    for label in order:
        x, y, bw, bh, area = (int(stats[label, s]) for s in range(5))
        if area < min_area:
            break
        aspect = bh / bw if bw else 0.0
        if not _ASPECT_RANGE[0] <= aspect <= _ASPECT_RANGE[1]:
            continue
        upper = gray[y : y + max(1, int(bh * 0.6)), x : x + bw]
        dark_fraction = float((upper < _DARK_LUMA).mean())
        if dark_fraction < _MIN_DARK_FRACTION:
            continue
        return (x, y, bw, bh)
    raise NoFaceError("no skin component passes the face gates")


def face_embedding(image: LoadedImage) -> list[float]:
    """Unit-norm embedding of the detected face crop."""
    x, y, w, h = find_face(image)
    crop = cv2.cvtColor(image.bgr[y : y + h, x : x + w], cv2.COLOR_BGR2GRAY)
    thumb = cv2.resize(crop, (EMBED_SIDE, EMBED_SIDE), interpolation=cv2.INTER_AREA)
    vector = thumb.flatten().astype(np.float64)
    vector -= vector.mean()
    norm = float(np.linalg.norm(vector))
    if norm < 1e-9:
        # A flat crop carries no identity signal; emit a fixed direction.
        vector = np.zeros(EMBED_SIDE * EMBED_SIDE)
        vector[0] = 1.0
        return vector.tolist()
    return (vector / norm).tolist()


# ---------------------------------------------------------------------------
# garment region masks

# Vertical extent of each garment category as a fraction of the figure's
# bounding box, head at 0.0 and feet at 1.0.
REGION_BANDS = {
    "hat": (0.00, 0.12),
    "glasses": (0.08, 0.18),
    "scarf": (0.15, 0.28),
    "dress": (0.22, 0.78),
    "upper_body": (0.22, 0.52),
    "belt": (0.50, 0.58),
    "lower_body": (0.52, 0.88),
    "shoes": (0.86, 1.00),
}

_FOREGROUND_DIFF = 20


def _foreground(image: LoadedImage) -> np.ndarray:
    """Pixels that differ from the border-estimated background color."""
    bgr = image.bgr.astype(np.int16)
    border = np.concatenate(
        [bgr[0, :], bgr[-1, :], bgr[:, 0], bgr[:, -1]], axis=0
    )
    background = np.median(border, axis=0)
    diff = np.abs(bgr - background).max(axis=2)
    return (diff > _FOREGROUND_DIFF).astype(np.uint8)


def region_mask(image: LoadedImage, category: str) -> np.ndarray:
    """Binary (0/255) mask of the category's band within the figure.

    Raises NoRegionError when the image has no foreground figure or the
    band contains none of it; KeyError for an unknown category.
    """
    lo, hi = REGION_BANDS[category]
    fg = _foreground(image)
    ys, xs = np.nonzero(fg)
    if ys.size == 0:
        raise NoRegionError("image has no foreground figure")
    top, bottom = int(ys.min()), int(ys.max())
    left, right = int(xs.min()), int(xs.max())
    extent = bottom - top + 1
    band_top = top + int(lo * extent)
    band_bottom = top + max(int(hi * extent), int(lo * extent) + 1)

    mask = np.zeros_like(fg)
    band = slice(band_top, min(band_bottom, bottom + 1))
    mask[band, left : right + 1] = fg[band, left : right + 1]
    if not mask.any():
        raise NoRegionError(f"no figure pixels in the {category} band")
    return mask * 255


def encode_mask_png(mask: np.ndarray) -> bytes:
    ok, encoded = cv2.imencode(".png", mask)
    if not ok:
        raise RuntimeError("mask PNG encoding failed")
    return encoded.tobytes()
