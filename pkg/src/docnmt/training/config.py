"""Flat ``key=value`` configuration files and the training configuration."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import asdict, dataclass
from pathlib import Path

from ..corpus import atomic_write_text


class ConfigFileError(ValueError):
    pass


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{source}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"), str(path))


def dump_kv(values: dict) -> str:
    lines = []
    for k, v in values.items():
        if v is None:
            continue
        lines.append(f"{k}={str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def save_kv(path, values: dict) -> None:
    atomic_write_text(path, dump_kv(values))


def _coerce(value: str, tp) -> object:
    origin = typing.get_origin(tp)
    if origin is typing.Union or (origin is not None and type(None) in typing.get_args(tp)):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value.lower() in ("", "none", "null"):
            return None
        return _coerce(value, args[0])
    if tp is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigFileError(f"not a boolean: {value!r}")
    if tp is int:
        return int(value)
    if tp is float:
        return float(value)
    return value


def from_kv(cls, values: dict[str, str], strict: bool = True):
    """Build dataclass ``cls`` from string values, coercing by field annotation."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if strict and unknown:
        raise ConfigFileError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in values.items():
        if k in names:
            try:
                kwargs[k] = _coerce(v, hints[k]) if isinstance(v, str) else v
            except ValueError as exc:
                raise ConfigFileError(f"{k}: {exc}") from None
    return cls(**kwargs)


@dataclass(frozen=True)
class TrainConfig:
    warmup_steps: int = 4000
    lr_scale: float = 2.0
    batch_tokens: int = 2048
    max_steps: int = 1000
    checkpoint_every: int = 0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    label_smoothing: float = 0.1
    finetune_from: str | None = None
    log_every: int = 50

    def __post_init__(self):
        if self.warmup_steps < 1:
            raise ConfigFileError("warmup_steps must be >= 1")
        if self.batch_tokens < 1 or self.max_steps < 0:
            raise ConfigFileError("batch_tokens must be >= 1 and max_steps >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict, strict: bool = True) -> "TrainConfig":
        return from_kv(cls, d, strict=strict)
