"""Run configuration: one TOML file, paths relative to it, secrets from the environment."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .equiv import StimulusConfig
from .errors import ConfigError, DomainError
from .learning import LearningConfig
from .library import Embedder, make_embedder
from .llm import LlmGateway, make_llm
from .model import Metric, SearchConfig
from .simulators import make_simulator
from .synthesis import Flow, SynthesisConstraints, make_synthesizer
from .toolchain import Toolchain

REQUIRED = ("target", "adapters.llm", "adapters.synthesizer", "adapters.simulator", "adapters.embedder")


def _lookup(data: dict, dotted: str) -> Any:
    node: Any = data
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"missing config key '{dotted}'")
        node = node[part]
    return node


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section [{name}] must be a table")
    return value


def _build(cls, values: dict, section: str, **overrides):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")
    merged = {**values, **{k: v for k, v in overrides.items() if v is not None}}
    if "area_band" in merged and merged["area_band"] is not None:
        merged["area_band"] = tuple(merged["area_band"])
    try:
        return cls(**merged)
    except (TypeError, ValueError, DomainError) as exc:
        raise ConfigError(f"invalid [{section}]: {exc}") from exc


@dataclass
class RunConfig:
    path: Path
    data: dict
    target: Metric
    adapters: dict[str, str]
    workspace: Path
    seed: int
    workers: int = 1
    learning: LearningConfig = field(default_factory=LearningConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    stimulus: StimulusConfig = field(default_factory=StimulusConfig)

    @classmethod
    def load(cls, path: str | Path, *, seed: int | None = None, workers: int | None = None) -> "RunConfig":
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data, path, seed=seed, workers=workers)

    @classmethod
    def from_dict(cls, data: dict, path: Path, *, seed: int | None = None, workers: int | None = None) -> "RunConfig":
        for key in REQUIRED:
            _lookup(data, key)
        try:
            target = Metric.parse(data["target"])
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        adapters = {k: str(v) for k, v in _section(data, "adapters").items()}
        base = path.resolve().parent
        workspace = (base / str(data.get("workspace", "."))).resolve()
        run_seed = int(seed if seed is not None else data.get("seed", 42))
        n_workers = int(workers if workers is not None else data.get("workers", 1))
        if n_workers < 1:
            raise ConfigError("workers must be at least 1")
        stimulus = _build(StimulusConfig, _section(data, "stimulus"), "stimulus", seed=run_seed)
        learning = _build(LearningConfig, _section(data, "learning"), "learning")
        search = _build(SearchConfig, _section(data, "search"), "search")
        return cls(path, data, target, adapters, workspace, run_seed, n_workers, learning, search, stimulus)

    @property
    def base(self) -> Path:
        return self.path.resolve().parent

    def resolve(self, value: str | Path) -> Path:
        p = Path(value)
        return p if p.is_absolute() else (self.base / p).resolve()

    def output(self, relative: str | Path) -> Path:
        """A path inside the workspace; anything escaping it is refused."""
        p = Path(relative)
        out = (p if p.is_absolute() else self.workspace / p).resolve()
        if out != self.workspace and self.workspace not in out.parents:
            raise ConfigError(f"refusing to write {out}: outside workspace {self.workspace}")
        return out

    # adapters ---------------------------------------------------------------

    def llm_gateway(self) -> LlmGateway:
        opts = _section(self.data, "llm")
        name = self.adapters["llm"]
        if name == "scripted":
            script = opts.get("script")
            adapter = make_llm(name, script=self.resolve(script) if script else None)
        else:
            extra = {k: opts[k] for k in ("url", "model", "timeout") if k in opts}
            if "prompt_dir" in opts:
                extra["prompt_dir"] = self.resolve(opts["prompt_dir"])
            adapter = make_llm(name, **extra)
        return LlmGateway(
            adapter,
            temperature=float(opts.get("temperature", 0.6)),
            max_attempts=int(opts.get("max_attempts", 2)),
            max_in_flight=int(opts.get("max_in_flight", self.workers)),
            target_metric=self.target.value,
        )

    def synthesizer(self):
        opts = dict(_section(self.data, "synthesis"))
        name = self.adapters["synthesizer"]
        if name == "mock":
            kwargs = {"unsynthesizable_markers": tuple(opts.get("unsynthesizable_markers", ()))}
        else:
            kwargs = {k: opts[k] for k in ("yosys", "sta", "timeout", "max_concurrent") if k in opts}
            if "liberty" in opts:
                kwargs["liberty"] = str(self.resolve(opts["liberty"]))
        try:
            return make_synthesizer(name, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def constraints(self) -> SynthesisConstraints:
        opts = _section(self.data, "synthesis")
        try:
            return SynthesisConstraints(
                target_library=str(opts.get("target_library", "freepdk45")),
                clock_period=opts.get("clock_period"),
                flow=Flow(opts.get("flow", "accurate")),
                target=self.target,
            )
        except (ValueError, DomainError) as exc:
            raise ConfigError(f"invalid [synthesis]: {exc}") from exc

    def simulator(self):
        opts = _section(self.data, "simulator")
        name = self.adapters["simulator"]
        if name == "scripted":
            return make_simulator(name, rules=dict(opts.get("rules", {})), default=str(opts.get("default", "PASS")))
        try:
            return make_simulator(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def embedder(self) -> Embedder:
        opts = _section(self.data, "embedder")
        name = self.adapters["embedder"]
        kwargs = {}
        if name in ("hashed-tfidf", "fallback", "tfidf") and "dim" in opts:
            kwargs["dim"] = int(opts["dim"])
        elif name == "remote":
            kwargs = {k: opts[k] for k in ("url", "model", "timeout") if k in opts}
        return make_embedder(name, **kwargs)

    @property
    def accept_threshold(self) -> float:
        return self.learning.accept_threshold

    @property
    def sim_timeout(self) -> float:
        return float(_section(self.data, "simulator").get("timeout", 300.0))

    def toolchain(self) -> Toolchain:
        artifacts = _section(self.data, "simulator").get("keep_artifacts", False)
        return Toolchain(
            gateway=self.llm_gateway(),
            synthesizer=self.synthesizer(),
            simulator=self.simulator(),
            stimulus=self.stimulus,
            constraints=self.constraints(),
            sim_timeout=self.sim_timeout,
            artifacts_dir=self.output("artifacts") if artifacts else None,
            workers=self.workers,
        )


__all__ = ["REQUIRED", "RunConfig"]
