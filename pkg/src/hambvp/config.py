"""Experiment configuration: flat ``key = value`` files merged with command-line overrides.

Grammar, one entry per line::

    # comment
    key = value        # trailing comments are allowed

Lists are comma separated (``steps = 14,21,28``), ranges are
``a:b[:step]`` (``param_range = -7.5:-4.5:0.01``).  Unknown keys are errors.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration (exit code 1 on the command line)."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    variant: str | None = None
    method: str | None = None
    steps: tuple = ()
    mesh: str | None = None
    warp: str = "exp-sine"
    param_range: tuple | None = None
    functional: str | None = None
    out: str | None = None
    formats: tuple = ("csv", "json", "svg")
    jobs: int = 1
    epsilon: float | None = None
    grid: int | None = None
    tolerances: dict = field(default_factory=dict)

    def out_dir(self) -> Path:
        base = self.out or os.environ.get("HAMBVP_OUT") or "hambvp-out"
        return Path(base)

    def echo(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["steps"] = list(self.steps)
        d["formats"] = list(self.formats)
        d["param_range"] = list(self.param_range) if self.param_range else None
        d["out"] = str(self.out_dir())
        return d


def parse_steps(text) -> tuple:
    if isinstance(text, (list, tuple)):
        vals = [int(v) for v in text]
    else:
        try:
            vals = [int(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"steps must be comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise ConfigError("steps must be positive integers")
    return tuple(vals)


def parse_range(text) -> tuple:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(":")
    try:
        vals = [float(v) for v in parts]
    except ValueError:
        raise ConfigError(f"range must be a:b[:step], got {text!r}") from None
    if len(vals) not in (2, 3):
        raise ConfigError(f"range must be a:b[:step], got {text!r}")
    a, b = vals[0], vals[1]
    if not a < b:
        raise ConfigError(f"range {text!r} is empty or reversed")
    step = vals[2] if len(vals) == 3 else None
    if step is not None and not 0 < step <= b - a:
        raise ConfigError(f"range step must lie in (0, b - a], got {step}")
    return (a, b, step)


def parse_formats(text) -> tuple:
    from .output import FORMATS
    vals = tuple(v.strip() for v in (text.split(",") if isinstance(text, str) else text) if v.strip())
    for v in vals:
        if v not in FORMATS:
            raise ConfigError(f"unknown output format {v!r}; known: {', '.join(FORMATS)}")
    if not vals:
        raise ConfigError("at least one output format is required")
    return vals


TOLERANCE_NAMES = ("corank2",)


def _tolerances(text) -> dict:
    out = {}
    for item in str(text).split(","):
        if not item.strip():
            continue
        k, _, v = item.partition("=")
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"tolerance override must be name=value, got {item!r}") from None
        if k.strip() not in TOLERANCE_NAMES:
            raise ConfigError(f"unknown tolerance {k.strip()!r}; known: {', '.join(TOLERANCE_NAMES)}")
    return out


_CONVERTERS = {
    "experiment": str,
    "variant": str,
    "method": str,
    "steps": parse_steps,
    "mesh": str,
    "warp": str,
    "param_range": parse_range,
    "functional": str,
    "out": str,
    "formats": parse_formats,
    "jobs": int,
    "epsilon": float,
    "grid": int,
    "tolerances": _tolerances,
}


def parse_text(text: str, source="<config>") -> dict:
    """Parse key-value text into converted values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in _CONVERTERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value.strip())
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_text(text, str(path))


def build_config(file_values: dict | None = None, **overrides) -> ExperimentConfig:
    """File values first, then non-``None`` overrides (the command line wins)."""
    values = dict(file_values or {})
    for k, v in overrides.items():
        if v is None:
            continue
        if k not in _CONVERTERS:
            raise ConfigError(f"unknown option {k!r}")
        values[k] = v if not isinstance(v, str) or k in ("experiment", "variant", "method", "mesh",
                                                          "warp", "functional", "out") \
            else _CONVERTERS[k](v)
    if "experiment" not in values:
        raise ConfigError("no experiment given")
    cfg = ExperimentConfig(**values)
    if cfg.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return cfg


def with_defaults(cfg: ExperimentConfig, **defaults) -> ExperimentConfig:
    """Fill fields that are still unset (``None`` or empty) from ``defaults``."""
    upd = {k: v for k, v in defaults.items() if getattr(cfg, k) in (None, ())}
    return replace(cfg, **upd)
