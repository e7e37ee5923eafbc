import io

import pytest

pytest.importorskip("scorer_service")

from PIL import Image, ImageDraw


def png_bytes(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, "PNG")
    return buf.getvalue()


@pytest.fixture(scope="session")
def portrait() -> bytes:
    """A drawn frontal face, deliberately different from the protocol
    suite's fixture in size, tones, and layout."""
    im = Image.new("RGB", (180, 220), (168, 170, 176))
    d = ImageDraw.Draw(im)
    d.ellipse([30, 20, 150, 180], fill=(210, 170, 140))
    for cx in (68, 112):
        d.ellipse([cx - 13, 78, cx + 13, 96], fill=(248, 244, 240))
        d.ellipse([cx - 6, 81, cx + 6, 93], fill=(28, 22, 18))
        d.rectangle([cx - 15, 64, cx + 15, 71], fill=(60, 44, 32))
    d.polygon([(90, 92), (83, 124), (97, 124)], fill=(188, 148, 118))
    d.ellipse([66, 138, 114, 154], fill=(146, 64, 56))
    d.rectangle([44, 180, 136, 220], fill=(44, 96, 72))
    return png_bytes(im)


@pytest.fixture(scope="session")
def figure() -> bytes:
    im = Image.new("RGB", (140, 300), (158, 160, 166))
    d = ImageDraw.Draw(im)
    skin = (214, 176, 146)
    d.ellipse([48, 10, 92, 64], fill=skin)
    for cx in (62, 78):
        d.ellipse([cx - 4, 30, cx + 4, 38], fill=(26, 22, 18))
    d.rectangle([62, 64, 78, 74], fill=skin)
    d.rectangle([38, 74, 102, 160], fill=(96, 60, 140))
    d.rectangle([24, 78, 38, 150], fill=skin)
    d.rectangle([102, 78, 116, 150], fill=skin)
    d.rectangle([42, 160, 98, 246], fill=(44, 46, 52))
    d.rectangle([42, 246, 67, 270], fill=(238, 236, 230))
    d.rectangle([73, 246, 98, 270], fill=(238, 236, 230))
    return png_bytes(im)


@pytest.fixture(scope="session")
def solid() -> bytes:
    return png_bytes(Image.new("RGB", (80, 80), (150, 150, 150)))


@pytest.fixture(scope="session")
def blue_garment() -> bytes:
    """A product-photo stand-in: saturated blue rectangle on light
    background."""
    im = Image.new("RGB", (160, 160), (240, 240, 240))
    ImageDraw.Draw(im).rectangle([30, 30, 130, 130], fill=(60, 90, 210))
    return png_bytes(im)
