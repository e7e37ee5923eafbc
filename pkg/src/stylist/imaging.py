"""Small raster utilities shared by the domain model, ports, and try-on flow.

Everything here is deterministic: the same input bytes always produce the
same output bytes, which the replayable-scenario guarantees depend on.
"""
from __future__ import annotations

import io

from PIL import Image, ImageDraw, UnidentifiedImageError

from .errors import InvalidImageError

WHITE = (255, 255, 255)


def decode_image(data: bytes) -> Image.Image:
    """Decode raster bytes into a Pillow image, or raise InvalidImageError."""
    if not data:
        raise InvalidImageError("empty image payload")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InvalidImageError(f"undecodable image: {exc}") from exc
    return img


def image_size(data: bytes) -> tuple[int, int]:
    img = decode_image(data)
    return img.width, img.height


def require_min_size(data: bytes, min_w: int, min_h: int) -> None:
    w, h = image_size(data)
    if w < min_w or h < min_h:
        raise InvalidImageError(f"image {w}x{h} below minimum {min_w}x{min_h}")


def png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def solid_png(width: int, height: int, rgb: tuple[int, int, int]) -> bytes:
    """A flat-colour PNG; the workhorse of scripted scenarios and tests."""
    return png_bytes(Image.new("RGB", (width, height), rgb))


def hconcat_white(left: bytes, right: bytes) -> bytes:
    """Place two rasters side by side on white, left image first.

    The right image is scaled to the left image's height, preserving
    aspect ratio, so the composite stays legible to an image editor.
    """
    a = decode_image(left).convert("RGB")
    b = decode_image(right).convert("RGB")
    if b.height != a.height:
        new_w = max(1, round(b.width * a.height / b.height))
        b = b.resize((new_w, a.height), Image.LANCZOS)
    canvas = Image.new("RGB", (a.width + b.width, a.height), WHITE)
    canvas.paste(a, (0, 0))
    canvas.paste(b, (a.width, 0))
    return png_bytes(canvas)


def apply_mask_white(image: bytes, mask: bytes) -> bytes:
    """Keep masked pixels, fill everything else with white.

    The mask is binarised at 128; it must match the image dimensions.
    """
    img = decode_image(image).convert("RGB")
    m = decode_image(mask).convert("L")
    if m.size != img.size:
        raise InvalidImageError(
            f"mask {m.size} does not match image {img.size}"
        )
    binary = m.point(lambda p: 255 if p >= 128 else 0)
    white = Image.new("RGB", img.size, WHITE)
    return png_bytes(Image.composite(img, white, binary))


def mask_coverage(mask: bytes) -> float:
    """Fraction of mask pixels at or above the binarisation threshold."""
    m = decode_image(mask).convert("L")
    hist = m.point(lambda p: 255 if p >= 128 else 0).histogram()
    on = hist[255]
    total = m.width * m.height
    return on / total if total else 0.0


def full_mask(width: int, height: int) -> bytes:
    return png_bytes(Image.new("L", (width, height), 255))


def rect_mask(width: int, height: int, box: tuple[int, int, int, int]) -> bytes:
    """Binary mask that is on inside ``box`` (x0, y0, x1, y1) and off outside."""
    m = Image.new("L", (width, height), 0)
    x0, y0, x1, y1 = box
    if x1 > x0 and y1 > y0:
        draw = ImageDraw.Draw(m)
        # Pillow's rectangle is inclusive of the second corner, hence the -1.
        draw.rectangle((x0, y0, x1 - 1, y1 - 1), fill=255)
    return png_bytes(m)
