"""Versioned prompt templates and their renderer.

Templates live as UTF-8 text assets, one file per template id, with
double-brace named placeholders like ``{{ gender }}``.  Rendering is a
single substitution pass: argument values are inserted verbatim and never
re-scanned, so output is deterministic for identical inputs.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

from ..errors import ExtraArgError, MissingArgError, UnknownTemplateError

_PLACEHOLDER = re.compile(r"\{\{\s*([^{}]+?)\s*\}\}")

#: Renderable templates and the arguments each one requires.
_REQUIRED_ARGS: dict[str, tuple[str, ...]] = {
    "interpreter_first": ("user clothing description",),
    "interpreter_retry": ("user clothing description", "negative examples"),
    "search_diagnoser": ("user clothing description",),
    "tryon_garment_with_model": ("gender", "description"),
    "tryon_garment_without_model": ("gender", "description"),
    "tryon_diagnoser": ("user clothing description",),
    "person_describer": (),
    "artist_rubric": (),
}

#: Assets shipped alongside the renderable set (nothing renders these).
_EXTRA_ASSETS = ("dataset_generator",)

TEMPLATE_IDS = tuple(_REQUIRED_ARGS)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    required_args: tuple[str, ...]


_cache: dict[str, PromptTemplate] = {}


def _asset_text(name: str) -> str:
    path = resources.files(__package__) / "templates" / f"{name}.txt"
    return path.read_text(encoding="utf-8")


def get_template(template_id: str) -> PromptTemplate:
    if template_id not in _REQUIRED_ARGS:
        raise UnknownTemplateError(template_id)
    if template_id not in _cache:
        body = _asset_text(template_id)
        required = _REQUIRED_ARGS[template_id]
        found = set(_PLACEHOLDER.findall(body))
        if found != set(required):
            raise UnknownTemplateError(
                f"{template_id}: placeholders {sorted(found)} do not match "
                f"declared arguments {sorted(required)}"
            )
        _cache[template_id] = PromptTemplate(template_id, body, required)
    return _cache[template_id]


def render_prompt(template_id: str, args: Mapping[str, str]) -> str:
    """Render a template with exactly its required arguments.

    Raises UnknownTemplateError for an unregistered id, MissingArgError
    when a required argument is absent, and ExtraArgError when an
    unexpected one is supplied.
    """
    template = get_template(template_id)
    for name in template.required_args:
        if name not in args:
            raise MissingArgError(name)
    for name in args:
        if name not in template.required_args:
            raise ExtraArgError(name)
    return _PLACEHOLDER.sub(lambda m: str(args[m.group(1)]), template.body)


def template_checksums() -> dict[str, str]:
    """SHA-256 of every shipped asset, keyed by template id.

    Lets a test pin the template bytes so silent edits get caught.
    """
    sums: dict[str, str] = {}
    for name in TEMPLATE_IDS + _EXTRA_ASSETS:
        data = _asset_text(name).encode("utf-8")
        sums[name] = hashlib.sha256(data).hexdigest()
    return sums
