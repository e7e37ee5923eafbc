"""Latency and dollar-cost model for a full styling run.

Two independent views of the same pipeline:

* ``estimate_latency`` / ``estimate_cost`` predict a run before it happens,
  from expected call counts and per-call usage profiles.
* ``actuals_from_telemetry`` prices a run after the fact from the recorded
  port calls.

Image editing runs on local hardware, so edits contribute latency but no
dollar cost.  Scorer calls are treated the same way.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ConfigError, MissingPriceError
from .ports import Port, PortCallRecord

logger = logging.getLogger(__name__)

#: Name of the pricing preset shipped with the package.
DEFAULT_PRESET = "paper-2025-08"

#: Pipeline phases that get their own bucket in actuals.  Records tagged with
#: anything else still count toward the totals.
PHASES = ("designer", "consultant", "critic")


@dataclass(frozen=True)
class ModelPrice:
    """Unit prices for one chat model.

    Token prices are per million tokens, image prices per thousand images.
    """

    input_per_mtok: float
    output_per_mtok: float
    image_per_kimg: float

    def __post_init__(self) -> None:
        for name in ("input_per_mtok", "output_per_mtok", "image_per_kimg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def call_cost(self, tokens_in: float, tokens_out: float, images: float) -> float:
        """Dollar cost of one call with the given usage."""
        return (
            tokens_in * self.input_per_mtok / 1e6
            + tokens_out * self.output_per_mtok / 1e6
            + images * self.image_per_kimg / 1e3
        )


@dataclass(frozen=True)
class Pricing:
    """A price table: chat models plus the per-query search fee.

    ``models`` preserves insertion order; when a blended price is built
    without an explicit model list, weights are applied in this order.
    """

    models: Mapping[str, ModelPrice]
    search_per_query: float
    name: str = ""

    def __post_init__(self) -> None:
        if not self.models:
            raise ValueError("pricing needs at least one model")
        if self.search_per_query < 0:
            raise ValueError("search_per_query must be non-negative")

    def price_for(self, model: str) -> ModelPrice:
        try:
            return self.models[model]
        except KeyError:
            raise MissingPriceError(model) from None

    def price_or_zero(self, model: str) -> ModelPrice:
        """Like :meth:`price_for` but free for unknown models.

        Used when pricing telemetry: scripted backends have ids that no
        price table knows, and a report should not fail over that.
        """
        price = self.models.get(model)
        if price is None:
            logger.debug("no price for model %r, counting it as free", model)
            return ModelPrice(0.0, 0.0, 0.0)
        return price

    def blended(
        self,
        weights: Sequence[float],
        model_ids: Optional[Sequence[str]] = None,
    ) -> ModelPrice:
        """Weighted average price across ``model_ids`` (default: all models).

        Weights must match the model list in length and sum to 1.
        """
        ids = list(model_ids) if model_ids is not None else list(self.models)
        if len(weights) != len(ids):
            raise ValueError(
                f"{len(weights)} weights for {len(ids)} models"
            )
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("blend weights must sum to 1")
        prices = [self.price_for(model) for model in ids]
        return ModelPrice(
            input_per_mtok=sum(w * p.input_per_mtok for w, p in zip(weights, prices)),
            output_per_mtok=sum(w * p.output_per_mtok for w, p in zip(weights, prices)),
            image_per_kimg=sum(w * p.image_per_kimg for w, p in zip(weights, prices)),
        )


def load_pricing(name_or_path: str = DEFAULT_PRESET) -> Pricing:
    """Load a price table from a shipped preset name or a JSON file path.

    Anything containing a path separator or ending in ``.json`` is treated
    as a path; otherwise the name is looked up among packaged presets.
    """
    if "/" in name_or_path or name_or_path.endswith(".json"):
        text = Path(name_or_path).read_text(encoding="utf-8")
    else:
        ref = resources.files("stylist").joinpath(
            "assets", "pricing", f"{name_or_path}.json"
        )
        try:
            text = ref.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"unknown pricing preset {name_or_path!r}") from None
    try:
        payload = json.loads(text)
        models = {
            model: ModelPrice(
                input_per_mtok=float(entry["input_per_mtok"]),
                output_per_mtok=float(entry["output_per_mtok"]),
                image_per_kimg=float(entry["image_per_kimg"]),
            )
            for model, entry in payload["models"].items()
        }
        return Pricing(
            models=models,
            search_per_query=float(payload["search_per_query"]),
            name=str(payload.get("name", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad pricing table {name_or_path!r}: {exc}") from exc


@dataclass(frozen=True)
class CallClassUsage:
    """Expected usage of one class of chat call.

    ``model`` selects the price; the empty string means the blended price
    across the expert pool.
    """

    tokens_in: float
    tokens_out: float
    images: float
    model: str = ""


#: The call classes a run is made of, with usage profiles measured from
#: instrumented runs.  Interpretation calls go to whichever expert answers,
#: hence the blended price; the cheaper fixed model handles diagnosis and
#: critique.
DEFAULT_USAGE: Mapping[str, CallClassUsage] = {
    "interpreter": CallClassUsage(1060, 40, 1),
    "item_diagnoser": CallClassUsage(460, 10, 1, model="qwen-vl-max"),
    "tryon_diagnoser": CallClassUsage(500, 10, 2, model="qwen-vl-max"),
    "critic_describe": CallClassUsage(440, 10, 1, model="qwen-vl-max"),
    "critic_artist": CallClassUsage(780, 20, 1, model="qwen-vl-max"),
}


def _default_pricing() -> Pricing:
    return load_pricing(DEFAULT_PRESET)


@dataclass(frozen=True)
class CostParams:
    """Knobs of the predictive model.

    ``expected_expert_calls`` is the mean number of experts consulted per run
    (first one always, later ones only after escalation).
    ``expected_extra_searches`` and ``expected_extra_tryons`` are the mean
    retry counts per garment beyond the first attempt, so a garment costs
    ``1 + extra`` attempts and ``extra`` diagnoser calls on average.
    """

    garments: int = 3
    vlm_call_seconds: float = 10.0
    search_seconds: float = 25.0
    edit_seconds: float = 120.0
    expected_expert_calls: float = 1.8
    expected_extra_searches: float = 0.6
    expected_extra_tryons: float = 0.4
    expert_weights: Sequence[float] = (0.4, 0.3, 0.2, 0.1)
    pricing: Pricing = field(default_factory=_default_pricing)

    def __post_init__(self) -> None:
        if self.garments < 0:
            raise ValueError("garments must be non-negative")
        for name in (
            "vlm_call_seconds",
            "search_seconds",
            "edit_seconds",
            "expected_expert_calls",
            "expected_extra_searches",
            "expected_extra_tryons",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if abs(sum(self.expert_weights) - 1.0) > 1e-9:
            raise ValueError("expert_weights must sum to 1")


@dataclass(frozen=True)
class PhaseBreakdown:
    """Per-phase numbers plus their total; unit depends on the producer."""

    designer: float
    consultant: float
    critic: float
    other: float = 0.0

    @property
    def total(self) -> float:
        return self.designer + self.consultant + self.critic + self.other

    def to_dict(self) -> dict:
        return {
            "designer": self.designer,
            "consultant": self.consultant,
            "critic": self.critic,
            "other": self.other,
            "total": self.total,
        }


def estimate_latency(params: CostParams) -> PhaseBreakdown:
    """Expected wall-clock seconds per phase.

    Per garment the designer spends one search round plus the expected
    retries, each retry adding a search and a diagnoser call; the whole
    phase repeats once per expected expert.  The consultant edits
    ``1 + extra`` times per garment and diagnoses ``extra`` times.  The
    critic makes two chat calls (scorer calls are treated as free and
    fast next to these).
    """
    k = params.garments
    search_rounds = 1.0 + params.expected_extra_searches
    designer = params.expected_expert_calls * (
        params.vlm_call_seconds
        + k
        * (
            search_rounds * params.search_seconds
            + params.expected_extra_searches * params.vlm_call_seconds
        )
    )
    tryon_rounds = 1.0 + params.expected_extra_tryons
    consultant = k * (
        tryon_rounds * params.edit_seconds
        + params.expected_extra_tryons * params.vlm_call_seconds
    )
    critic = 2.0 * params.vlm_call_seconds
    return PhaseBreakdown(designer=designer, consultant=consultant, critic=critic)


def estimate_cost(
    params: CostParams,
    usage: Mapping[str, CallClassUsage] = DEFAULT_USAGE,
) -> PhaseBreakdown:
    """Expected dollars per phase.

    ``usage`` must cover every call class in :data:`DEFAULT_USAGE`.  Classes
    with an empty ``model`` are priced at the weighted blend across the
    price table's models, weights taken from ``params.expert_weights``.
    """
    missing = sorted(set(DEFAULT_USAGE) - set(usage))
    if missing:
        raise ValueError(f"usage missing call classes: {', '.join(missing)}")
    pricing = params.pricing
    # Rank i of the expert pool pairs with the i-th priced model, so a
    # smaller pool blends over a prefix of the price table.
    model_ids = list(pricing.models)[: len(params.expert_weights)]
    blended = pricing.blended(params.expert_weights, model_ids)

    def class_cost(name: str, calls: float) -> float:
        profile = usage[name]
        price = blended if not profile.model else pricing.price_for(profile.model)
        return calls * price.call_cost(
            profile.tokens_in, profile.tokens_out, profile.images
        )

    k = params.garments
    experts = params.expected_expert_calls
    search_queries = experts * k * (1.0 + params.expected_extra_searches)
    diagnoser_calls = experts * k * params.expected_extra_searches
    designer = (
        search_queries * pricing.search_per_query
        + class_cost("item_diagnoser", diagnoser_calls)
        + class_cost("interpreter", experts)
    )
    consultant = class_cost("tryon_diagnoser", k * params.expected_extra_tryons)
    critic = class_cost("critic_describe", 1.0) + class_cost("critic_artist", 1.0)
    return PhaseBreakdown(designer=designer, consultant=consultant, critic=critic)


@dataclass(frozen=True)
class RunActuals:
    """What a finished run measurably spent, per phase."""

    seconds: PhaseBreakdown
    dollars: PhaseBreakdown
    calls: int

    def to_dict(self) -> dict:
        return {
            "seconds": self.seconds.to_dict(),
            "dollars": self.dollars.to_dict(),
            "calls": self.calls,
        }


def actuals_from_telemetry(
    records: Iterable[PortCallRecord],
    pricing: Optional[Pricing] = None,
) -> RunActuals:
    """Sum wall time and priced usage over recorded port calls.

    Chat calls are priced by their backend id when the price table knows
    it and are free otherwise; each search call costs one query fee; edit
    and scorer calls are free.  Records land in the bucket named by their
    phase tag, or in ``other``.
    """
    pricing = pricing or _default_pricing()
    seconds = {phase: 0.0 for phase in PHASES}
    dollars = {phase: 0.0 for phase in PHASES}
    other_s = 0.0
    other_d = 0.0
    count = 0
    for record in records:
        count += 1
        if record.port == Port.VLM_CHAT:
            price = pricing.price_or_zero(record.backend_id)
            cost = price.call_cost(
                record.tokens_in, record.tokens_out, record.images_in
            )
        elif record.port == Port.SEARCH:
            cost = pricing.search_per_query
        else:
            cost = 0.0
        if record.phase in seconds:
            seconds[record.phase] += record.wall_time
            dollars[record.phase] += cost
        else:
            other_s += record.wall_time
            other_d += cost
    return RunActuals(
        seconds=PhaseBreakdown(other=other_s, **seconds),
        dollars=PhaseBreakdown(other=other_d, **dollars),
        calls=count,
    )


__all__ = [
    "DEFAULT_PRESET",
    "DEFAULT_USAGE",
    "CallClassUsage",
    "CostParams",
    "ModelPrice",
    "PhaseBreakdown",
    "Pricing",
    "RunActuals",
    "actuals_from_telemetry",
    "estimate_cost",
    "estimate_latency",
    "load_pricing",
]
