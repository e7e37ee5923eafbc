from pathlib import Path

import pytest

from stylist.imaging import solid_png

REPO_ROOT = Path(__file__).resolve().parent.parent
GOLDEN_DIR = REPO_ROOT / "scenarios" / "golden-run"


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return REPO_ROOT


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_DIR


@pytest.fixture(scope="session")
def person_png() -> bytes:
    """A 96x128 stand-in portrait, comfortably above the minimum size."""
    return solid_png(96, 128, (200, 190, 180))


@pytest.fixture(scope="session")
def garment_png() -> bytes:
    return solid_png(64, 64, (30, 42, 74))
