"""Run configuration: defaults, flat ``key = value`` files, and manifests."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError

OUTPUT_ENV = "SPDECONTROL_OUTPUT_DIR"
PROBLEMS = ("heat", "nagumo", "lq_oracle")

SMOKE_PRESET = {"n": 50, "S": 100, "n_sgd": 200, "dt": 0.02}


def default_output_dir():
    return os.environ.get(OUTPUT_ENV, "spdecontrol-out")


@dataclass(frozen=True)
class RunConfig:
    problem: str = "heat"
    n: int = 400
    dt: float = 0.01
    T: float = 1.0
    S: int = 500
    n_sgd: int = 1000
    alpha: float = 0.1
    alpha_decay: float | None = None
    batch: int = 1
    seed: int = 0
    n_noise: int = 50
    d: int = 3
    amplitude: float = 0.05
    precondition_mass: bool = True
    ess_threshold: float | None = None
    cost_replicas: int = 500
    output_dir: str = ""
    threads: int = 1

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}, got {self.problem!r}")
        for name in ("n", "S", "n_sgd", "batch", "n_noise", "d", "cost_replicas", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError("dt and T must be positive")
        steps = round(self.T / self.dt)
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError(f"dt={self.dt!r} does not divide T={self.T!r} into whole steps")
        if not self.alpha >= 0:
            raise ConfigError("alpha must be non-negative")
        if self.alpha_decay is not None and not self.alpha_decay > 0:
            raise ConfigError("alpha_decay must be positive")
        if self.ess_threshold is not None and not 0 < self.ess_threshold <= 1:
            raise ConfigError("ess_threshold must lie in (0, 1]")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be non-negative")
        if self.problem == "heat" and self.n < 2:
            raise ConfigError("heat problem needs n >= 2")
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}
_TYPES = {
    "problem": str, "output_dir": str, "precondition_mass": bool,
    "alpha_decay": "optfloat", "ess_threshold": "optfloat",
    "dt": float, "T": float, "alpha": float, "amplitude": float,
}


def parse_value(key, text):
    """Convert a textual value for ``key``; raises ``ValueError`` on bad input."""
    kind = _TYPES.get(key, int)
    text = text.strip()
    if kind is str:
        return text
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "optfloat":
        return None if text.lower() in ("none", "") else float(text)
    if kind is float:
        return float(text)
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_pairs(text):
    """``key = value`` lines (``#`` comments allowed) -> dict; errors cite the line."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        try:
            out[key] = parse_value(key, value)
        except ValueError as err:
            raise ConfigError(f"{key}: {err}", lineno) from None
    return out


def load_config(path=None, overrides=None, preset=None):
    """Defaults < ``preset`` < file at ``path`` < ``overrides`` (ignoring ``None``)."""
    values = dict(preset or {})
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read config file: {err}") from None
        values.update(parse_pairs(text))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = replace(RunConfig(), **values)
    if not cfg.output_dir:
        cfg = replace(cfg, output_dir=default_output_dir())
    return cfg.validate()


def manifest_text(cfg, version):
    lines = [f"# spdecontrol {version}"]
    lines += [f"{k} = {format_value(v)}" for k, v in asdict(cfg).items()]
    return "\n".join(lines) + "\n"


def read_manifest(path):
    with open(path) as fh:
        return replace(RunConfig(), **parse_pairs(fh.read())).validate()
