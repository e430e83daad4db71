"""Run configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored. Every key must be known; values
are converted to the field's type. :func:`serialize` writes the canonical
form (every set field, declaration order), which :func:`parse_config` reads
back unchanged.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Any

COMMANDS = ("fit-multiway", "fit-surveillance", "fit-dlm", "simulate", "diagnose")
MODELS = ("multiway", "surveillance", "dlm")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str | None = None
    # chain control
    iters: int = 2000
    burn: int = 500
    thin: int = 1
    seed: int = 0
    chains: int = 1
    threads: int = 1
    # tuning
    sigma_g: float = 0.5
    theta_sd: float = 0.5
    step_sd: float = 0.5
    n_mc: int = 1000
    rho_n_mc: int = 2000
    beta: float = 0.95
    delta: float = 3.0
    rj_moves: int = 1
    graph_prior: str = "uniform"
    edge_penalty: float = 1.0
    adapt: bool = True
    # inputs and outputs
    data: str | None = None
    dims: int | None = None
    counts: str | None = None
    adjacency: str | None = None
    series: str | None = None
    spec: str | None = None
    traces: str | None = None
    reference: str | None = None
    out_dir: str | None = None
    # simulation
    model: str | None = None
    shape: str | None = None
    n: int = 10
    lattice: str | None = None
    cancers: int = 3
    years: int = 8
    rho: float = 0.9
    ar_order: int = 2
    population: float = 10000.0
    T: int = 20

    def validate(self) -> "RunConfig":
        if self.command is None:
            raise ConfigError("command is required")
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.burn < 0 or self.iters <= self.burn:
            raise ConfigError(f"need 0 <= burn < iters (burn={self.burn}, iters={self.iters})")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.chains < 1 or self.threads < 1:
            raise ConfigError("chains and threads must be at least 1")
        for name in ("sigma_g", "theta_sd", "step_sd"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_mc < 1 or self.rho_n_mc < 1 or self.rj_moves < 0:
            raise ConfigError("n_mc, rho_n_mc must be positive and rj_moves non-negative")
        if not 0 < self.beta <= 1:
            raise ConfigError("beta must lie in (0, 1]")
        if self.delta <= 2:
            raise ConfigError("delta must exceed 2")
        if self.graph_prior not in ("uniform", "edge-penalizing"):
            raise ConfigError(f"unknown graph_prior {self.graph_prior!r}")
        if not 0 < self.edge_penalty <= 1:
            raise ConfigError("edge_penalty must lie in (0, 1]")
        if self.model is not None and self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.dims is not None and self.dims < 1:
            raise ConfigError("dims must be at least 1")
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _field_type(name: str) -> type:
    t = str(_FIELDS[name].type)
    for base in (bool, int, float):
        if t.startswith(base.__name__):
            return base
    return str


def _convert(name: str, raw: str, lineno: int) -> Any:
    kind = _field_type(name)
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: {name} expects {kind.__name__}, got {raw!r}") from None
    return raw


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Parse and validate. ``command`` fills in a missing ``command`` key and must
    agree with it when both are given."""
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key or not raw:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, lineno)
    if command is not None:
        if values.get("command", command) != command:
            raise ConfigError(f"config is for {values['command']!r}, not {command!r}")
        values["command"] = command
    return RunConfig(**values).validate()


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(config: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def as_dict(config: RunConfig, exclude: tuple[str, ...] = ()) -> dict[str, Any]:
    return {k: v for k, v in dataclasses.asdict(config).items() if v is not None and k not in exclude}


def read_config(path: str, command: str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, command)
