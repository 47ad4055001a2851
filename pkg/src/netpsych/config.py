"""Pipeline configuration: YAML file plus command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .ega import EgaConfig

OUTPUT_ENV = "NETPSYCH_OUTPUT_DIR"
DEFAULT_OUTPUT = "netpsych-out"


class ConfigError(ValueError):
    """Invalid or unresolvable configuration (CLI exit status 2)."""


@dataclass(frozen=True)
class BootSettings:
    n: int = 500
    mode: str = "nonparametric"
    jobs: int = 1


@dataclass(frozen=True)
class TefiSettings:
    n_draws: int = 500


@dataclass(frozen=True)
class PipelineConfig:
    input: Path | None = None
    items: tuple[str, ...] | None = None
    item_prefix: str = ""
    cohort_column: str | None = None
    scale_min: int = 1
    scale_max: int = 5
    correlation: str = "kendall_tau_b"
    ega: EgaConfig = field(default_factory=EgaConfig)
    bootstrap: BootSettings = field(default_factory=BootSettings)
    tefi: TefiSettings = field(default_factory=TefiSettings)
    cfa_model: Path | None = None
    reference: Path | None = None
    output_dir: Path | None = None
    seed: int = 0

    def resolved_output(self) -> Path:
        if self.output_dir is not None:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))

    def validate(self, need_input: bool = True) -> None:
        if need_input:
            if self.input is None:
                raise ConfigError("no input file given")
            if not Path(self.input).is_file():
                raise ConfigError(f"input file not found: {self.input}")
        for name in ("cfa_model", "reference"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{name} file not found: {p}")
        if self.scale_min >= self.scale_max:
            raise ConfigError("scale_min must be below scale_max")
        if not 0 <= self.ega.gamma <= 1:
            raise ConfigError("ega.gamma must lie in [0, 1]")
        if self.ega.n_lambda < 2 or not 0 < self.ega.lambda_ratio < 1:
            raise ConfigError("ega.n_lambda must be >= 2 and ega.lambda_ratio in (0, 1)")
        if self.ega.steps < 1:
            raise ConfigError("ega.steps must be positive")
        if self.ega.algorithm not in ("walktrap", "louvain"):
            raise ConfigError("ega.algorithm must be walktrap or louvain")
        if self.bootstrap.n < 1 or self.bootstrap.jobs < 1:
            raise ConfigError("bootstrap.n and bootstrap.jobs must be positive")
        if self.bootstrap.mode not in ("nonparametric", "parametric"):
            raise ConfigError("bootstrap.mode must be nonparametric or parametric")
        if self.tefi.n_draws < 100:
            raise ConfigError("tefi.n_draws must be at least 100")

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, Path):
                return str(v)
            if hasattr(v, "__dataclass_fields__"):
                return {f.name: conv(getattr(v, f.name)) for f in fields(v)}
            if isinstance(v, tuple):
                return list(v)
            return v
        return conv(self)


_SECTIONS = {"ega": EgaConfig, "bootstrap": BootSettings, "tefi": TefiSettings}
_PATHS = ("input", "cfa_model", "reference", "output_dir")


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, Mapping):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return cls(**raw)


def from_mapping(raw: Mapping[str, Any], base_dir: Path | None = None) -> PipelineConfig:
    """Build a config from a parsed document; relative paths resolve against ``base_dir``."""
    raw = dict(raw or {})
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            kwargs[key] = _section(_SECTIONS[key], value, key)
        elif key in _PATHS and value is not None:
            p = Path(value)
            kwargs[key] = p if p.is_absolute() or base_dir is None else base_dir / p
        elif key == "items" and value is not None:
            kwargs[key] = tuple(str(v) for v in value)
        else:
            kwargs[key] = value
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, Mapping):
        raise ConfigError("config document must be a mapping")
    return from_mapping(raw or {}, path.parent)


def override(config: PipelineConfig, **values) -> PipelineConfig:
    """Apply non-None overrides; dotted keys such as ``ega.gamma`` reach sections."""
    top: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {}
    for key, v in values.items():
        if v is None:
            continue
        if "." in key:
            sec, name = key.split(".", 1)
            nested.setdefault(sec, {})[name] = v
        else:
            top[key] = v
    for sec, vals in nested.items():
        top[sec] = replace(getattr(config, sec), **vals)
    return replace(config, **top)


def read_factor_sets(path) -> dict[str, list[str]]:
    """Read a ``factors: {name: [items]}`` document (CFA model or reference allocation)."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read factor file {path}: {exc}") from exc
    if not isinstance(raw, Mapping) or not isinstance(raw.get("factors"), Mapping):
        raise ConfigError(f"{path}: expected a top-level 'factors' mapping")
    if raw.get("complete") is False:
        raise ConfigError(f"{path} is marked incomplete; fill in every item before use")
    out = {}
    seen: set[str] = set()
    for name, items in raw["factors"].items():
        if not isinstance(items, list) or not items:
            raise ConfigError(f"{path}: factor {name!r} needs a non-empty item list")
        items = [str(i) for i in items]
        dup = seen.intersection(items)
        if dup:
            raise ConfigError(f"{path}: items {sorted(dup)} appear in more than one factor")
        seen.update(items)
        out[str(name)] = items
    return out
