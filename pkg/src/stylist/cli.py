"""Command-line interface.

Four subcommands: ``run`` styles one request, ``batch`` a directory of
them, ``estimate`` prints the cost model without making a single call,
and ``validate-scenario`` dry-checks a scripted-replies file.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import click

from . import __version__
from .config import load_config
from .costs import estimate_cost, estimate_latency
from .domain import UserRequest
from .errors import ScenarioError, StylistError
from .pipeline import RunReport, execute_pipeline, run_pipeline
from .ports import MockScenario

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".webp")


@click.group()
@click.version_option(version=__version__, prog_name="stylist")
def main() -> None:
    """Outfit styling pipeline: spec sheets, shopping search, virtual try-on."""


def _load_request(image_path: str, preference: str) -> UserRequest:
    path = Path(image_path)
    try:
        return UserRequest(
            request_id=path.stem,
            user_image=path.read_bytes(),
            preference_text=preference,
        )
    except (OSError, StylistError) as exc:
        raise click.ClickException(f"bad request: {exc}") from exc


def _echo_summary(report: RunReport) -> None:
    if report.fatal_error:
        click.echo(f"fatal: {report.fatal_error}")
    if report.outfit:
        cats = " ".join(g["category"] for g in report.outfit["garments"])
        click.echo(
            f"outfit: score {report.outfit['outfit_score']:.3f} "
            f"accepted={str(report.accepted).lower()} [{cats}]"
        )
    if report.evaluation:
        ev = report.evaluation
        artist = ev.get("artist") or {}

        def fmt(value: object) -> str:
            return f"{value:.3f}" if isinstance(value, float) else "null"

        click.echo(
            "evaluation: "
            f"style {fmt(ev.get('style_consistency'))}  "
            f"visual {fmt(ev.get('visual_quality'))}  "
            f"face {fmt(ev.get('face_similarity'))}  "
            f"artist {artist.get('overall', 'null')}"
        )
    click.echo(f"report: {report.report_path}")


_CONFIG_OPTION = click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Run configuration file (YAML).",
)
_SCENARIO_OPTION = click.option(
    "--scenario",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Scripted-replies file; forces mock mode over the config.",
)
_OUT_OPTION = click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False),
    default=None,
    help="Root directory for run output (default from config).",
)
_SEED_OPTION = click.option(
    "--seed", type=int, default=None, help="Determinism salt echoed in the report."
)


@main.command()
@_CONFIG_OPTION
@click.option(
    "--image",
    "image_path",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Photo of the person to style.",
)
@click.option("--preference", required=True, help="Clothing preference text.")
@_SCENARIO_OPTION
@_OUT_OPTION
@_SEED_OPTION
def run(
    config_path: str,
    image_path: str,
    preference: str,
    scenario: Optional[str],
    out_dir: Optional[str],
    seed: Optional[int],
) -> None:
    """Style one request end to end and write its run directory."""
    request = _load_request(image_path, preference)
    try:
        report = execute_pipeline(
            config_path, request, scenario=scenario, out_dir=out_dir, seed=seed
        )
    except StylistError as exc:
        raise click.ClickException(str(exc)) from exc
    _echo_summary(report)
    sys.exit(report.exit_code)


@main.command()
@_CONFIG_OPTION
@click.option(
    "--requests",
    "requests_dir",
    type=click.Path(exists=True, file_okay=False),
    required=True,
    help="Directory of requests: image files with same-stem .txt preferences.",
)
@_SCENARIO_OPTION
@_OUT_OPTION
@_SEED_OPTION
def batch(
    config_path: str,
    requests_dir: str,
    scenario: Optional[str],
    out_dir: Optional[str],
    seed: Optional[int],
) -> None:
    """Style every request in a directory, a few at a time.

    Each image file pairs with a .txt file of the same stem holding the
    preference text; runs are isolated per request.  Exits with the worst
    per-request code.
    """
    try:
        config = load_config(
            config_path, scenario=scenario, out_dir=out_dir, seed=seed
        )
    except StylistError as exc:
        raise click.ClickException(str(exc)) from exc

    requests = []
    for path in sorted(Path(requests_dir).iterdir()):
        if path.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        preference_file = path.with_suffix(".txt")
        if not preference_file.is_file():
            raise click.ClickException(f"{path.name} has no matching .txt preference")
        requests.append(
            _load_request(str(path), preference_file.read_text(encoding="utf-8"))
        )
    if not requests:
        raise click.ClickException(f"no request images found in {requests_dir}")

    with ThreadPoolExecutor(max_workers=config.run.batch_concurrency) as pool:
        reports = list(pool.map(lambda r: run_pipeline(config, r), requests))

    worst = 0
    for report in reports:
        click.echo(
            f"{report.request_id}: exit {report.exit_code} ({report.report_path})"
        )
        if report.exit_code == 1 or worst == 1:
            worst = 1
        else:
            worst = max(worst, report.exit_code)
    sys.exit(worst)


@main.command()
@_CONFIG_OPTION
@click.option(
    "--garments",
    type=int,
    default=None,
    help="Override the garment count the estimate assumes.",
)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def estimate(config_path: str, garments: Optional[int], as_json: bool) -> None:
    """Print expected latency and dollars for a run; makes no calls."""
    try:
        config = load_config(config_path)
        params = config.cost_params
        if garments is not None:
            params = replace(params, garments=garments)
        latency = estimate_latency(params)
        dollars = estimate_cost(params)
    except StylistError as exc:
        raise click.ClickException(str(exc)) from exc
    if as_json:
        click.echo(
            json.dumps(
                {"latency_s": latency.to_dict(), "dollars": dollars.to_dict()},
                indent=2,
                sort_keys=True,
            )
        )
        return
    click.echo(f"garments: {params.garments}")
    click.echo(
        f"latency_s: designer {latency.designer:.1f}  "
        f"consultant {latency.consultant:.1f}  critic {latency.critic:.1f}  "
        f"total {latency.total:.1f}"
    )
    click.echo(
        f"dollars:   designer {dollars.designer:.6f}  "
        f"consultant {dollars.consultant:.6f}  critic {dollars.critic:.6f}  "
        f"total {dollars.total:.6f}"
    )


@main.command("validate-scenario")
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
def validate_scenario(scenario: str) -> None:
    """Dry-check a scripted-replies file: shapes, ranges, referenced images."""
    try:
        parsed = MockScenario.load(scenario)
    except ScenarioError as exc:
        raise click.ClickException(str(exc)) from exc
    problems = parsed.validate()
    for problem in problems:
        click.echo(problem)
    if problems:
        sys.exit(1)
    click.echo(f"ok: {len(parsed.queues)} reply queues")


if __name__ == "__main__":
    main()
