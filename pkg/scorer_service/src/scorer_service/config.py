"""Service configuration.

Credentials never live in config values: ``credential_env`` names an
environment variable holding the static bearer token, and an empty name
means the service runs open.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

ENDPOINTS = ("vqa", "clip_ii", "iqa", "face_embed", "mask")

DEFAULT_MODELS = {
    "vqa": "color-word-alignment-v1",
    "clip_ii": "histogram-thumbnail-cosine-v1",
    "iqa": "sharpness-contrast-v1",
    "face_embed": "skin-geometry-embed-v1",
    "mask": "background-diff-bands-v1",
}


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8091
    # Larger images are downscaled to this bound (long side) before any
    # analysis; the processed size is echoed in responses for audit.
    max_image_dim: int = 768
    device: str = "cpu"
    credential_env: str = ""
    models: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} outside 1..65535")
        if self.max_image_dim < 32:
            raise ValueError("max_image_dim must be >= 32")
        if self.device != "cpu":
            raise ValueError(
                f"device {self.device!r} unsupported: the classical analyzers "
                "run on cpu only"
            )
        for endpoint in ENDPOINTS:
            if not self.models.get(endpoint):
                raise ValueError(f"no model id configured for endpoint {endpoint!r}")

    def bearer_token(self) -> str:
        """The required token, or "" when the service runs open.

        Naming a variable that is not set is a deployment mistake and
        fails fast rather than silently disabling auth.
        """
        if not self.credential_env:
            return ""
        token = os.environ.get(self.credential_env)
        if token is None:
            raise ValueError(
                f"environment variable {self.credential_env} is not set"
            )
        return token
