"""Flat ``section.key = value`` experiment files.

Lines starting with ``#`` or ``;`` are comments.  List values are comma
separated; numeric lists also accept ``start:step:stop`` ranges (inclusive).
The full schema is :data:`SCHEMA`; unknown keys are rejected.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(float(s))


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "inf") else float(s)


def parse_floats(s: str) -> list[float]:
    """``"0, 0.5"`` or ``"0.0:0.1:1.0"`` (inclusive, rounded to 12 digits)."""
    out = []
    for part in s.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            start, step, stop = (float(x) for x in part.split(":"))
            if step <= 0:
                raise ValueError(f"range step must be positive in {part!r}")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            out.extend(round(start + i * step, 12) for i in range(n))
        else:
            out.append(float(part))
    return out


def parse_ints(s: str) -> list[int]:
    vals = parse_floats(s)
    if any(v != int(v) for v in vals):
        raise ValueError(f"expected integers, got {s!r}")
    return [int(v) for v in vals]


def parse_strs(s: str) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()]


# key -> (parser, default)
SCHEMA = {
    "model.variant": (str, "cvmbc"),
    "model.alpha": (float, 0.0),
    "model.gamma": (float, 0.0),
    "graph.kind": (str, "torus"),
    "graph.d": (int, 1),
    "graph.L": (int, 100),
    "graph.N": (int, 100),
    "init.kind": (str, "bernoulli"),
    "init.p": (float, 0.5),
    "init.sites": (parse_ints, []),
    "init.bits": (str, ""),
    "stop.max_events": (_opt_int, None),
    "stop.max_time": (_opt_float, None),
    "stop.stop_on_absorption": (_bool, False),
    "run.replicas": (int, 1),
    "run.seed": (int, 0),
    "observe.snapshot_every": (int, 0),
    "observe.patterns": (parse_strs, []),
    "sweep.param": (str, ""),
    "sweep.values": (parse_floats, []),
    "meanfield.N": (parse_ints, [1000]),
    "meanfield.s0": (float, 0.5),
    "meanfield.gamma": (parse_floats, [0.0]),
    "meanfield.T": (float, 10.0),
    "meanfield.grid_step": (float, 0.01),
    "jump.kind": (str, "constant"),
    "jump.lambda1": (float, 2 / 3),
    "jump.lambda2": (float, 0.0),
    "jump.mu": (float, 1 / 3),
    "jump.c0": (int, 2),
    "jump.runs": (int, 10000),
    "jump.escape_level": (int, 64),
    "jump.max_jumps": (int, 100000),
    "couple.kind": (str, "cvmbc_vs_bvm"),
    "couple.p_lower": (float, 0.5),
    "couple.p_extra": (float, 0.0),
    "couple.check_every": (int, 1000),
    "validate.graphs": (parse_strs, ["torus:1:6"]),
    "validate.variants": (parse_strs, ["cvmbc", "avmbc"]),
}

SWEEPABLE = ("model.alpha", "model.gamma", "init.p")


@dataclass
class ExperimentConfig:
    values: dict
    raw: dict

    def __getitem__(self, key):
        return self.values[key]

    def with_value(self, key: str, value) -> "ExperimentConfig":
        v = dict(self.values)
        v[key] = value
        return ExperimentConfig(v, dict(self.raw))


def parse_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[root]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw = dict(cp["root"])
    raw.update(overrides or {})
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        else:
            values[key] = default
    cfg = ExperimentConfig(values, raw)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if cfg["run.replicas"] < 1:
        raise ConfigError("run.replicas must be >= 1")
    if cfg["sweep.param"]:
        if cfg["sweep.param"] not in SWEEPABLE:
            raise ConfigError(f"sweep.param must be one of {SWEEPABLE}")
        if not cfg["sweep.values"]:
            raise ConfigError("sweep.values is empty")
    if cfg["graph.kind"] not in ("torus", "complete"):
        raise ConfigError("graph.kind must be torus or complete")


def load(path: str | Path | None = None, preset: str | None = None,
         overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file or a shipped preset (name without ``.cfg``)."""
    if path and preset:
        raise ConfigError("give either a config path or a preset, not both")
    if preset:
        res = resources.files("vmbc") / "presets" / f"{preset}.cfg"
        if not res.is_file():
            raise ConfigError(f"no preset named {preset!r}; available: {', '.join(list_presets())}")
        text = res.read_text()
    elif path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        text = ""
    return parse_text(text, overrides)


def list_presets() -> list[str]:
    base = resources.files("vmbc") / "presets"
    return sorted(p.name[:-4] for p in base.iterdir() if p.name.endswith(".cfg"))
