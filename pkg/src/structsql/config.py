"""Run configuration: a TOML document with paths/endpoint/linker/eval
sections, every key overridable by a CLI flag."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class PathsConfig:
    catalog: str | None = None
    db_root: str | None = None
    grammar: str | None = None
    rules: str | None = None
    model: str | None = None


@dataclass
class EndpointConfig:
    base_url: str = ""
    mode: str = "mock:echo"
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 256
    max_in_flight: int = 4


@dataclass
class LinkerConfig:
    dim: int = 32
    k: int = 8
    epochs: int = 200
    lr: float = 0.05
    seed: int = 42
    layers: int = 2
    buckets: int = 4096


@dataclass
class EvalSettings:
    timeout_s: float = 30.0
    format: str = "text"
    timing_runs: int = 3


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    linker: LinkerConfig = field(default_factory=LinkerConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def validate(self) -> None:
        if self.linker.k < 1:
            raise ConfigError("linker.k must be >= 1")
        if self.linker.dim < 2:
            raise ConfigError("linker.dim must be >= 2")
        if self.linker.layers < 1:
            raise ConfigError("linker.layers must be >= 1")
        if self.eval.timeout_s <= 0:
            raise ConfigError("eval.timeout_s must be positive")
        if self.endpoint.temperature < 0:
            raise ConfigError("endpoint.temperature must be >= 0")


def load_config(path: str | Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}")
    for section, target in (
        ("paths", cfg.paths),
        ("endpoint", cfg.endpoint),
        ("linker", cfg.linker),
        ("eval", cfg.eval),
    ):
        for key, value in doc.get(section, {}).items():
            if not hasattr(target, key):
                raise ConfigError(f"unknown config key {section}.{key}")
            setattr(target, key, value)
    cfg.validate()
    return cfg
