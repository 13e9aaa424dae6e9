"""Experiment configuration: one flat, typed, human-editable file.

Format: ``key = value`` lines, ``#`` comments, blank lines ignored.
Every key is declared in the schema below with a type and default;
unknown keys and untypable values are schema errors.  The parsed
configuration plus the seed fully determine a run's ledgers.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .inequalities import HARNESS_TAGS

__all__ = ["ExperimentConfig", "load_config", "parse_config", "config_template"]

_INITIAL_CHOICES = ("zero", "shear", "random-seeded", "file")
_OPERATOR_CHOICES = ("lambda", "omega_hat", "gamma", "k", "phi")
_EPS_CHOICES = ("half-max", "fixed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, typed description of one experiment."""

    name: str
    nx: int = 64
    ny: int = 65
    height: float = 8.0
    initial: str = "shear"
    amplitude: float = 1.0
    initial_file: str = ""
    t_final: float = 1.0
    dt: float = 0.125
    operators: str = "omega_hat"
    max_k: int = 8
    max_l: int = 12
    enlargement_check: bool = False
    inequalities: str = ""
    inequality_samples: int = 100
    calibration_samples: int = 48
    eps_policy: str = "half-max"
    eps: float = 0.0
    s_level: int = 2
    conjugate_scan: bool = False
    seed: int = 1
    output_dir: str = ""

    def operator_list(self) -> list[str]:
        return _split_list(self.operators)

    def inequality_list(self) -> list[str]:
        return _split_list(self.inequalities)

    def n_checkpoints(self) -> int:
        n = round(self.t_final / self.dt)
        if abs(n * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ConfigError(
                f"dt={self.dt} does not divide t_final={self.t_final} evenly"
            )
        return int(n) + 1

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self) -> "ExperimentConfig":
        if not self.name:
            raise ConfigError("config key 'name' is required")
        if self.initial not in _INITIAL_CHOICES:
            raise ConfigError(
                f"config key 'initial': {self.initial!r} is not one of {_INITIAL_CHOICES}"
            )
        if self.initial == "file" and not self.initial_file:
            raise ConfigError("config key 'initial_file' is required when initial = file")
        for op in self.operator_list():
            if op not in _OPERATOR_CHOICES:
                raise ConfigError(
                    f"config key 'operators': {op!r} is not one of {_OPERATOR_CHOICES}"
                )
        for tag in self.inequality_list():
            if tag not in HARNESS_TAGS:
                raise ConfigError(
                    f"config key 'inequalities': {tag!r} is not one of {tuple(HARNESS_TAGS)}"
                )
        if self.eps_policy not in _EPS_CHOICES:
            raise ConfigError(
                f"config key 'eps_policy': {self.eps_policy!r} is not one of {_EPS_CHOICES}"
            )
        if self.eps_policy == "fixed" and not self.eps > 0.0:
            raise ConfigError("config key 'eps' must be positive when eps_policy = fixed")
        for key, lo in (("nx", 8), ("ny", 9), ("max_k", 0), ("max_l", 1),
                        ("inequality_samples", 1), ("calibration_samples", 1),
                        ("s_level", 1)):
            if getattr(self, key) < lo:
                raise ConfigError(f"config key {key!r} must be >= {lo}")
        if self.t_final <= 0 or self.dt <= 0 or self.height <= 0:
            raise ConfigError("config keys t_final, dt, height must be positive")
        self.n_checkpoints()
        return self


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _coerce(key: str, text: str, target_type) -> object:
    try:
        if target_type is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        return target_type(text)
    except ValueError as exc:
        raise ConfigError(
            f"config key {key!r}: cannot parse {text!r} as {target_type.__name__}"
        ) from exc


def parse_config(text: str) -> ExperimentConfig:
    schema = {f.name: f.type for f in fields(ExperimentConfig)}
    types = {"str": str, "int": int, "float": float, "bool": bool}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        values[key] = _coerce(key, val, types[str(schema[key])] if isinstance(schema[key], str) else schema[key])
    if "name" not in values:
        raise ConfigError("config key 'name' is required")
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(encoding="utf-8"))


def config_template() -> str:
    """A commented template listing every key with its default."""
    cfg = ExperimentConfig(name="example")
    lines = ["# experiment configuration (key = value; '#' starts a comment)"]
    for f in fields(ExperimentConfig):
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"
