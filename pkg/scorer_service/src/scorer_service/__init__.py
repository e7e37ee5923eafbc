"""Scorer service: the styling pipeline's scorer protocol over HTTP.

Five endpoints (/v1/vqa, /v1/clip_ii, /v1/iqa, /v1/face_embed, /v1/mask)
plus /healthz, backed by deterministic classical-vision analyzers, so a
pipeline configured for a live scorer can run without GPU models.
"""

from .config import ServiceConfig
from .app import create_app

__version__ = "0.1.0"

__all__ = ["ServiceConfig", "create_app", "__version__"]
