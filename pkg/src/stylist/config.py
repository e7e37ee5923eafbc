"""One YAML file wires a whole run: backends, stage knobs, pricing, output.

Secrets never live in the file.  A backend entry names the environment
variable holding its key (``credential_env``); the file itself carrying a
key is rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import yaml

from .consultant import ConsultantConfig, DEFAULT_SIGMA
from .costs import CostParams, Pricing, load_pricing
from .designer import (
    DEFAULT_EXPERT_WEIGHTS,
    DEFAULT_TAU,
    DesignerConfig,
    ExpertPool,
)
from .domain import GarmentCategory
from .errors import ConfigError
from .feedback import LoopConfig
from .ports import BackendSet, MockBackendSet, MockScenario, Telemetry
from .ports.live import HttpBackend, LiveBackendSet

MODE_MOCK = "mock"
MODE_LIVE = "live"

#: Expert rank order matching the shipped price preset.
DEFAULT_EXPERTS = (
    "claude-sonnet-4",
    "gemini-2.5-pro",
    "llama-4-maverick",
    "qwen-vl-max",
)
DEFAULT_DIAGNOSER = "qwen-vl-max"
DEFAULT_CRITIC_VLM = "qwen-vl-max"

#: Keys that would put a secret into the config file.
_FORBIDDEN_SECRET_KEYS = ("api_key", "apikey", "credential", "secret", "token")


@dataclass(frozen=True)
class RunSettings:
    """Where runs land and how batch mode parallelizes."""

    out_dir: Path = Path("runs")
    seed: int = 0
    batch_concurrency: int = 2

    def __post_init__(self) -> None:
        if self.batch_concurrency < 1:
            raise ConfigError("run.batch_concurrency must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything execute_pipeline needs, resolved and validated."""

    run: RunSettings = field(default_factory=RunSettings)
    mode: str = MODE_MOCK
    scenario_path: Optional[Path] = None
    live_backends: tuple[HttpBackend, ...] = ()
    designer: DesignerConfig = field(default_factory=DesignerConfig)
    pool: ExpertPool = field(
        default_factory=lambda: ExpertPool.from_backend_ids(
            DEFAULT_EXPERTS, DEFAULT_EXPERT_WEIGHTS
        )
    )
    consultant: ConsultantConfig = field(default_factory=ConsultantConfig)
    critic_vlm: str = DEFAULT_CRITIC_VLM
    pricing: Pricing = field(default_factory=load_pricing)
    cost_params: CostParams = field(default_factory=CostParams)
    source_path: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.mode not in (MODE_MOCK, MODE_LIVE):
            raise ConfigError(f"unknown backend mode {self.mode!r}")
        if self.mode == MODE_MOCK and self.scenario_path is None:
            raise ConfigError("mock mode needs a scenario file")
        if self.mode == MODE_LIVE and not self.live_backends:
            raise ConfigError("live mode needs backend declarations")

    def build_backends(self, telemetry: Optional[Telemetry] = None) -> BackendSet:
        """Instantiate the configured backend set.

        In live mode this fails fast on any missing credential variable,
        before a single call goes out.
        """
        if self.mode == MODE_MOCK:
            assert self.scenario_path is not None
            scenario = MockScenario.load(self.scenario_path)
            return MockBackendSet(scenario, telemetry)
        return LiveBackendSet(list(self.live_backends), telemetry)


def load_config(
    path: str | Path,
    *,
    scenario: Optional[str | Path] = None,
    out_dir: Optional[str | Path] = None,
    seed: Optional[int] = None,
) -> PipelineConfig:
    """Parse and validate a config file; keyword overrides win.

    Relative paths inside the file resolve against the file's directory.
    Passing ``scenario`` forces mock mode regardless of the file.
    """
    path = Path(path)
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if payload is None:
        payload = {}
    if not isinstance(payload, Mapping):
        raise ConfigError("config root must be a mapping")
    config = parse_config(payload, base_dir=path.parent, source_path=path)

    overrides: dict[str, Any] = {}
    if scenario is not None:
        overrides["mode"] = MODE_MOCK
        overrides["scenario_path"] = Path(scenario)
    run = config.run
    if out_dir is not None:
        run = replace(run, out_dir=Path(out_dir))
    if seed is not None:
        run = replace(run, seed=seed)
    if run is not config.run:
        overrides["run"] = run
    return replace(config, **overrides) if overrides else config


def parse_config(
    payload: Mapping[str, Any],
    *,
    base_dir: str | Path = ".",
    source_path: Optional[Path] = None,
) -> PipelineConfig:
    base_dir = Path(base_dir)
    known = {"run", "backends", "designer", "consultant", "critic", "pricing"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")

    run = _parse_run(_section(payload, "run"), base_dir)
    mode, scenario_path, live = _parse_backends(_section(payload, "backends"), base_dir)
    designer_raw = _section(payload, "designer")
    consultant_raw = _section(payload, "consultant")
    critic_raw = _section(payload, "critic")
    pricing = _parse_pricing(_section(payload, "pricing"), base_dir)

    designer, pool = _parse_designer(designer_raw)
    consultant = _parse_consultant(consultant_raw)
    critic_vlm = str(critic_raw.get("vlm", DEFAULT_CRITIC_VLM))
    if not critic_vlm.strip():
        raise ConfigError("critic.vlm must be non-empty")

    weights = tuple(e.weight for e in pool.experts)
    cost_params = CostParams(expert_weights=weights, pricing=pricing)

    if mode == MODE_LIVE:
        _check_live_ids(live, pool, designer, consultant, critic_vlm)

    return PipelineConfig(
        run=run,
        mode=mode,
        scenario_path=scenario_path,
        live_backends=live,
        designer=designer,
        pool=pool,
        consultant=consultant,
        critic_vlm=critic_vlm,
        pricing=pricing,
        cost_params=cost_params,
        source_path=source_path,
    )


def _section(payload: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    raw = payload.get(name) or {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return raw


def _parse_run(raw: Mapping[str, Any], base_dir: Path) -> RunSettings:
    out = raw.get("out_dir", "runs")
    out_path = Path(out)
    if not out_path.is_absolute():
        out_path = base_dir / out_path
    try:
        seed = int(raw.get("seed", 0))
        concurrency = int(raw.get("batch_concurrency", 2))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad run settings: {exc}") from exc
    return RunSettings(out_dir=out_path, seed=seed, batch_concurrency=concurrency)


def _parse_backends(
    raw: Mapping[str, Any], base_dir: Path
) -> tuple[str, Optional[Path], tuple[HttpBackend, ...]]:
    mode = str(raw.get("mode", MODE_MOCK))
    scenario_path: Optional[Path] = None
    if "scenario" in raw and raw["scenario"]:
        scenario_path = Path(str(raw["scenario"]))
        if not scenario_path.is_absolute():
            scenario_path = base_dir / scenario_path
    live_raw = raw.get("live") or {}
    if not isinstance(live_raw, Mapping):
        raise ConfigError("backends.live must map backend id to its settings")
    backends = []
    for backend_id, entry in live_raw.items():
        if not isinstance(entry, Mapping):
            raise ConfigError(f"backend {backend_id!r} settings must be a mapping")
        for key in entry:
            if str(key).lower() in _FORBIDDEN_SECRET_KEYS:
                raise ConfigError(
                    f"backend {backend_id!r} carries {key!r} inline; put the "
                    "secret in an environment variable and name it via "
                    "credential_env"
                )
        try:
            backends.append(
                HttpBackend(
                    backend_id=str(backend_id),
                    kind=str(entry["kind"]),
                    endpoint=str(entry["endpoint"]),
                    model=str(entry.get("model", "")),
                    credential_env=str(entry.get("credential_env", "")),
                )
            )
        except KeyError as exc:
            raise ConfigError(
                f"backend {backend_id!r} is missing {exc.args[0]!r}"
            ) from exc
    if mode == MODE_LIVE and not backends:
        raise ConfigError("backends.mode is live but backends.live is empty")
    return mode, scenario_path, tuple(backends)


def _parse_thresholds(
    raw: Any, defaults: Mapping[GarmentCategory, float], where: str
) -> dict[GarmentCategory, float]:
    out = dict(defaults)
    if raw is None:
        return out
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where} must map category to threshold")
    for key, value in raw.items():
        try:
            category = GarmentCategory(str(key))
        except ValueError:
            raise ConfigError(f"{where}: unknown category {key!r}") from None
        try:
            out[category] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}[{key}]: not a number") from None
    return out


def _parse_designer(raw: Mapping[str, Any]) -> tuple[DesignerConfig, ExpertPool]:
    experts = raw.get("experts") or list(DEFAULT_EXPERTS)
    if not isinstance(experts, Sequence) or isinstance(experts, str):
        raise ConfigError("designer.experts must be a list of backend ids")
    weights_raw = raw.get("expert_weights")
    if weights_raw is None:
        if len(experts) == len(DEFAULT_EXPERT_WEIGHTS):
            weights = DEFAULT_EXPERT_WEIGHTS
        else:
            weights = tuple(1.0 / len(experts) for _ in experts)
    else:
        try:
            weights = tuple(float(w) for w in weights_raw)
        except (TypeError, ValueError):
            raise ConfigError("designer.expert_weights must be numbers") from None
    try:
        pool = ExpertPool.from_backend_ids([str(e) for e in experts], weights)
    except ValueError as exc:
        raise ConfigError(f"designer experts: {exc}") from exc

    diagnoser = str(raw.get("diagnoser", DEFAULT_DIAGNOSER))
    tau = _parse_thresholds(raw.get("thresholds"), DEFAULT_TAU, "designer.thresholds")
    try:
        config = DesignerConfig(
            tau=tau,
            omega=float(raw.get("outfit_threshold", 0.65)),
            item_loop=LoopConfig(
                threshold=0.7,
                max_iterations=int(raw.get("max_iterations", 3)),
                diagnoser_backend=diagnoser,
            ),
            search_num=int(raw.get("search_num", 10)),
            presence_backend=str(raw.get("presence_backend", "")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"designer settings: {exc}") from exc
    return config, pool


def _parse_consultant(raw: Mapping[str, Any]) -> ConsultantConfig:
    diagnoser = str(raw.get("diagnoser", DEFAULT_DIAGNOSER))
    sigma = _parse_thresholds(
        raw.get("thresholds"), DEFAULT_SIGMA, "consultant.thresholds"
    )
    try:
        return ConsultantConfig(
            sigma=sigma,
            candidates_per_round=int(raw.get("candidates_per_round", 3)),
            tryon_loop=LoopConfig(
                threshold=0.7,
                max_iterations=int(raw.get("max_iterations", 3)),
                diagnoser_backend=diagnoser,
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"consultant settings: {exc}") from exc


def _parse_pricing(raw: Mapping[str, Any], base_dir: Path) -> Pricing:
    preset = raw.get("preset")
    path = raw.get("path")
    if preset and path:
        raise ConfigError("pricing: give either preset or path, not both")
    if path:
        p = Path(str(path))
        if not p.is_absolute():
            p = base_dir / p
        return load_pricing(str(p))
    if preset:
        return load_pricing(str(preset))
    return load_pricing()


def _check_live_ids(
    live: Sequence[HttpBackend],
    pool: ExpertPool,
    designer: DesignerConfig,
    consultant: ConsultantConfig,
    critic_vlm: str,
) -> None:
    """Every chat backend a stage names must be declared in live mode."""
    vlm_ids = {b.backend_id for b in live if b.kind == "vlm"}
    wanted = {e.backend_id for e in pool.experts}
    wanted.add(designer.item_loop.diagnoser_backend)
    wanted.add(designer.presence_backend_id())
    wanted.add(consultant.tryon_loop.diagnoser_backend)
    wanted.add(critic_vlm)
    missing = sorted(w for w in wanted if w and w not in vlm_ids)
    if missing:
        raise ConfigError(
            f"live mode: no vlm backend declared for {', '.join(missing)}"
        )


__all__ = [
    "DEFAULT_CRITIC_VLM",
    "DEFAULT_DIAGNOSER",
    "DEFAULT_EXPERTS",
    "MODE_LIVE",
    "MODE_MOCK",
    "PipelineConfig",
    "RunSettings",
    "load_config",
    "parse_config",
]
