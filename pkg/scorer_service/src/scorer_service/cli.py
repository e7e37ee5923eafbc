"""Command line entrypoint: ``scorer-service serve``."""

from __future__ import annotations

import logging

import click
import uvicorn

from . import __version__
from .app import create_app
from .config import ServiceConfig


@click.group()
@click.version_option(__version__, prog_name="scorer-service")
def main() -> None:
    """Run the scorer protocol service."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8091, show_default=True, type=int)
@click.option(
    "--max-image-dim",
    default=768,
    show_default=True,
    type=int,
    help="Downscale larger images to this long side before analysis.",
)
@click.option(
    "--credential-env",
    default="",
    help="Environment variable holding the required bearer token; empty runs open.",
)
def serve(host: str, port: int, max_image_dim: int, credential_env: str) -> None:
    """Serve the five scorer endpoints plus /healthz."""
    logging.basicConfig(level=logging.INFO)
    config = ServiceConfig(
        host=host,
        port=port,
        max_image_dim=max_image_dim,
        credential_env=credential_env,
    )
    uvicorn.run(create_app(config), host=config.host, port=config.port)


if __name__ == "__main__":
    main()
