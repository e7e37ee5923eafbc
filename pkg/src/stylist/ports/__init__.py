"""Pluggable external-capability ports.

Eight operations cover everything the pipeline asks of the outside world:
VLM chat, image search, image editing, and the five perceptual scorers.
``base`` defines the contracts and telemetry, ``mock`` replays scripted
scenarios, ``live`` speaks HTTP to real providers.
"""
from .base import (
    BackendSet,
    Port,
    PortCallRecord,
    SearchResult,
    Telemetry,
    estimate_tokens,
)
from .mock import MockBackendSet, MockScenario
from .live import HttpBackend, LiveBackendSet

__all__ = [
    "BackendSet",
    "HttpBackend",
    "LiveBackendSet",
    "MockBackendSet",
    "MockScenario",
    "Port",
    "PortCallRecord",
    "SearchResult",
    "Telemetry",
    "estimate_tokens",
]
