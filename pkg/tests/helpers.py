"""Shared test plumbing: scripted backends and scenario shorthand."""

from __future__ import annotations

from typing import Any, Mapping, Sequence

from stylist.domain import GarmentCategory
from stylist.ports import MockBackendSet, MockScenario, Telemetry
from stylist.ports.base import CallMeter


def q(port: str, key: str, replies: Sequence[Any], **extra: Any) -> dict:
    """One scenario queue entry."""
    entry = {"port": port, "key": key, "replies": list(replies)}
    entry.update(extra)
    return entry


def scenario_payload(
    queues: Sequence[Mapping[str, Any]],
    *,
    backends: Sequence[str] = (),
    exhaustion: str = "repeat_last",
) -> dict:
    return {
        "exhaustion": exhaustion,
        "backends": list(backends),
        "queues": list(queues),
    }


def make_backends(
    queues: Sequence[Mapping[str, Any]],
    *,
    backends: Sequence[str] = (),
    exhaustion: str = "repeat_last",
    base_dir: str = ".",
    telemetry: Telemetry | None = None,
) -> MockBackendSet:
    scenario = MockScenario.from_payload(
        scenario_payload(queues, backends=backends, exhaustion=exhaustion),
        base_dir=base_dir,
    )
    return MockBackendSet(scenario, telemetry)


class CapturingBackendSet(MockBackendSet):
    """Mock backends that additionally record outgoing request content.

    The pipeline code only sees replies; these captures let tests assert
    on what was sent (rendered prompts, search queries, negative terms).
    """

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.chat_requests: list[tuple[str, str, str]] = []
        self.search_queries: list[str] = []
        self.edit_requests: list[tuple[str, tuple[str, ...]]] = []
        self.edit_images: list[tuple[bytes, ...]] = []

    def _do_vlm_chat(
        self,
        meter: CallMeter,
        backend_id: str,
        system_prompt: str,
        user_prompt: str,
        images: tuple[bytes, ...],
        context: str,
    ) -> str:
        self.chat_requests.append((backend_id, context, user_prompt))
        return super()._do_vlm_chat(
            meter, backend_id, system_prompt, user_prompt, images, context
        )

    def _do_search(self, meter, query, num_results, context):
        self.search_queries.append(query)
        return super()._do_search(meter, query, num_results, context)

    def _do_image_edit(self, meter, images, prompt, negative_terms, n, context):
        self.edit_requests.append((prompt, tuple(negative_terms)))
        self.edit_images.append(tuple(images))
        return super()._do_image_edit(
            meter, images, prompt, negative_terms, n, context
        )


def capturing_backends(
    queues: Sequence[Mapping[str, Any]],
    *,
    backends: Sequence[str] = (),
    exhaustion: str = "repeat_last",
    telemetry: Telemetry | None = None,
) -> CapturingBackendSet:
    scenario = MockScenario.from_payload(
        scenario_payload(queues, backends=backends, exhaustion=exhaustion)
    )
    return CapturingBackendSet(scenario, telemetry)


CATEGORY_BY_NAME = {c.value: c for c in GarmentCategory}
