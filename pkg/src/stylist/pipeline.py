"""End-to-end run orchestration and the machine-readable run report.

A run owns a directory: every image it produced, a ``report.json`` whose
image fields are paths relative to that directory, and a
``transcript.log`` with one JSON line per external call.  Replaying the
same scenario and request reproduces ``report.json`` byte for byte except
the ``created_at`` field.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .config import PipelineConfig, load_config
from .costs import actuals_from_telemetry, estimate_cost, estimate_latency
from .critic import evaluate
from .consultant import run_consultant
from .designer import run_designer
from .domain import OutfitProposal, TryOnState, UserRequest
from .errors import StylistError
from .ports import BackendSet, Port, Telemetry

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
TRANSCRIPT_NAME = "transcript.log"

#: Exit codes of the run contract.
EXIT_OK = 0
EXIT_FATAL = 1
EXIT_BEST_EFFORT = 2


@dataclass(frozen=True)
class RunReport:
    """Everything a run produced, in serializable form.

    Image fields hold paths relative to ``run_dir``.  ``exit_code`` is a
    pure function of the flags: fatal beats best-effort beats success.
    """

    tool_version: str
    mode: str
    scenario: Optional[str]
    seed: int
    created_at: str
    request_id: str
    preference_text: str
    request_image: str
    outfit: Optional[dict]
    tryon: Optional[dict]
    evaluation: Optional[dict]
    iteration_counts: dict
    costs: dict
    accepted: bool
    satisfied: bool
    fatal_error: Optional[str]
    run_dir: Path

    @property
    def exit_code(self) -> int:
        if self.fatal_error is not None:
            return EXIT_FATAL
        if self.accepted and self.satisfied:
            return EXIT_OK
        return EXIT_BEST_EFFORT

    def to_payload(self) -> dict:
        """The JSON document written to report.json (run_dir excluded)."""
        return {
            "tool_version": self.tool_version,
            "mode": self.mode,
            "scenario": self.scenario,
            "seed": self.seed,
            "created_at": self.created_at,
            "request": {
                "request_id": self.request_id,
                "preference_text": self.preference_text,
                "user_image": self.request_image,
            },
            "outfit": self.outfit,
            "tryon": self.tryon,
            "evaluation": self.evaluation,
            "iteration_counts": self.iteration_counts,
            "costs": self.costs,
            "accepted": self.accepted,
            "satisfied": self.satisfied,
            "fatal_error": self.fatal_error,
        }

    @property
    def report_path(self) -> Path:
        return self.run_dir / REPORT_NAME


def execute_pipeline(
    config_path: str | Path,
    request: UserRequest,
    *,
    scenario: Optional[str | Path] = None,
    out_dir: Optional[str | Path] = None,
    seed: Optional[int] = None,
) -> RunReport:
    """Load config, run all stages, write the run directory.

    Configuration problems raise ConfigError before any backend call.
    Failures past that point land in the report (``fatal_error`` set,
    exit code 1) rather than raising.
    """
    config = load_config(config_path, scenario=scenario, out_dir=out_dir, seed=seed)
    return run_pipeline(config, request)


def run_pipeline(config: PipelineConfig, request: UserRequest) -> RunReport:
    """Like :func:`execute_pipeline` but with a parsed config."""
    telemetry = Telemetry()
    backends = config.build_backends(telemetry)
    try:
        return _run(config, request, backends, telemetry)
    finally:
        close = getattr(backends, "close", None)
        if close is not None:
            close()


def _run(
    config: PipelineConfig,
    request: UserRequest,
    backends: BackendSet,
    telemetry: Telemetry,
) -> RunReport:
    run_dir = config.run.out_dir / request.request_id
    run_dir.mkdir(parents=True, exist_ok=True)

    outfit: Optional[OutfitProposal] = None
    state: Optional[TryOnState] = None
    evaluation = None
    fatal: Optional[str] = None

    try:
        outfit = run_designer(backends, request, config.pool, config.designer)
        state = run_consultant(
            backends, request.user_image, outfit, config.consultant
        )
        evaluation = evaluate(
            backends, request, state.current_image, config.critic_vlm
        )
    except StylistError as exc:
        logger.error("pipeline failed: %s", exc)
        fatal = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # a bug, but the report must still land on disk
        logger.exception("unexpected pipeline failure")
        fatal = f"{type(exc).__name__}: {exc}"

    report = _build_report(
        config, request, run_dir, telemetry, outfit, state, evaluation, fatal
    )
    _write_artifacts(report, request, outfit, state, telemetry)
    return report


def _build_report(
    config: PipelineConfig,
    request: UserRequest,
    run_dir: Path,
    telemetry: Telemetry,
    outfit: Optional[OutfitProposal],
    state: Optional[TryOnState],
    evaluation: Any,
    fatal: Optional[str],
) -> RunReport:
    garment_paths = {}
    outfit_payload = None
    if outfit is not None:
        for garment in outfit.garments:
            garment_paths[garment.category] = f"garments/{garment.category.value}.png"
        outfit_payload = {
            "sheet": outfit.sheet.to_dict(),
            "garments": [
                {
                    "category": g.category.value,
                    "image": garment_paths[g.category],
                    "source_link": g.candidate.source_link,
                    "image_url": g.candidate.image_url,
                    "alignment_score": g.candidate.alignment_score,
                    "person_present": g.candidate.person_present,
                    "full_description": g.full_description,
                    "short_description": g.short_description,
                    "final_score": g.final_score,
                    "iterations_used": g.iterations_used,
                    "satisfied": g.satisfied,
                    "negatives": g.negatives.to_dict(),
                }
                for g in outfit.garments
            ],
            "outfit_score": outfit.outfit_score,
            "accepted": outfit.accepted,
        }

    tryon_payload = None
    if state is not None:
        stage_payloads = []
        prev_path = "inputs/user.png"
        for stage in state.stages:
            chosen_path = f"tryon/{stage.category.value}.png"
            stage_payloads.append(
                {
                    "category": stage.category.value,
                    "garment_image": garment_paths.get(
                        stage.category, f"garments/{stage.category.value}.png"
                    ),
                    "input_image": prev_path,
                    "chosen_image": chosen_path,
                    "masked_similarity": stage.masked_similarity,
                    "regenerations": stage.regenerations,
                    "negatives": stage.negatives.to_dict(),
                    "satisfied": stage.satisfied,
                }
            )
            prev_path = chosen_path
        tryon_payload = {"final_image": "final.png", "stages": stage_payloads}

    expert_ids = {e.backend_id for e in config.pool.experts}
    experts_consulted = sum(
        1
        for record in telemetry.records()
        if record.port == Port.VLM_CHAT
        and record.phase == "designer"
        and record.context in expert_ids
    )
    iteration_counts = {
        "experts_consulted": experts_consulted,
        "item_loops": {
            g.category.value: g.iterations_used for g in outfit.garments
        }
        if outfit
        else {},
        "tryon_loops": {
            s.category.value: s.regenerations + 1 for s in state.stages
        }
        if state
        else {},
    }

    params = config.cost_params
    if outfit is not None:
        params = replace(params, garments=len(outfit.garments))
    costs = {
        "estimate": {
            "latency_s": estimate_latency(params).to_dict(),
            "dollars": estimate_cost(params).to_dict(),
        },
        "actuals": actuals_from_telemetry(
            telemetry.records(), config.pricing
        ).to_dict(),
    }

    accepted = bool(outfit is not None and outfit.accepted)
    satisfied = bool(
        outfit is not None
        and state is not None
        and all(g.satisfied for g in outfit.garments)
        and all(s.satisfied for s in state.stages)
    )
    return RunReport(
        tool_version=__version__,
        mode=config.mode,
        scenario=config.scenario_path.name if config.scenario_path else None,
        seed=config.run.seed,
        created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        request_id=request.request_id,
        preference_text=request.preference_text,
        request_image="inputs/user.png",
        outfit=outfit_payload,
        tryon=tryon_payload,
        evaluation=evaluation.to_dict() if evaluation is not None else None,
        iteration_counts=iteration_counts,
        costs=costs,
        accepted=accepted,
        satisfied=satisfied,
        fatal_error=fatal,
        run_dir=run_dir,
    )


def _write_artifacts(
    report: RunReport,
    request: UserRequest,
    outfit: Optional[OutfitProposal],
    state: Optional[TryOnState],
    telemetry: Telemetry,
) -> None:
    run_dir = report.run_dir
    (run_dir / "inputs").mkdir(exist_ok=True)
    (run_dir / "inputs" / "user.png").write_bytes(request.user_image)
    if outfit is not None:
        (run_dir / "garments").mkdir(exist_ok=True)
        for garment in outfit.garments:
            path = run_dir / "garments" / f"{garment.category.value}.png"
            path.write_bytes(garment.candidate.image)
    if state is not None:
        (run_dir / "tryon").mkdir(exist_ok=True)
        for stage in state.stages:
            path = run_dir / "tryon" / f"{stage.category.value}.png"
            path.write_bytes(stage.chosen_image)
        (run_dir / "final.png").write_bytes(state.current_image)

    with (run_dir / TRANSCRIPT_NAME).open("w", encoding="utf-8") as fh:
        for record in telemetry.records():
            fh.write(json.dumps(record.to_dict(), sort_keys=True))
            fh.write("\n")

    payload = report.to_payload()
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    (run_dir / REPORT_NAME).write_text(text, encoding="utf-8")


__all__ = [
    "EXIT_BEST_EFFORT",
    "EXIT_FATAL",
    "EXIT_OK",
    "REPORT_NAME",
    "TRANSCRIPT_NAME",
    "RunReport",
    "execute_pipeline",
    "run_pipeline",
]
