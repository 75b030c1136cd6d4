# purpose: run configuration and its flat key = value file format

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from medsamca.errors import ConfigurationError
from medsamca.model.atteffb import FusionMode


@dataclass
class ModelConfig:
    S: int = 64  # image height, and width unless W is set
    W: Optional[int] = None
    c: int = 64
    d: int = 64
    L: int = 4
    heads: int = 4
    patch: int = 16
    adapter_enabled: bool = True
    fusion_mode: str = "AtteFFB"
    cbrnet_enabled: bool = True
    alpha: float = 0.5
    lr: float = 1e-4
    weight_decay: float = 0.01
    batch_size: int = 8
    epochs: int = 40
    seed: int = 42
    dtype: str = "float64"
    freeze_backbone: bool = False
    train_fraction: float = 1.0
    perturb_max: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        self.fusion_mode = FusionMode.parse(self.fusion_mode).value

    def validate(self) -> "ModelConfig":
        mode = FusionMode.parse(self.fusion_mode)
        if mode is not FusionMode.NONE and not self.cbrnet_enabled:
            raise ConfigurationError(
                "fusion_mode {0} requires cbrnet_enabled".format(mode.value))
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in [0, 1], got {0}".format(self.alpha))
        if self.patch != 16 or self.S < 16 or self.S % 16:
            raise ConfigurationError(
                "S must be a positive multiple of 16 (patch 16), got S={0}, patch={1}".format(
                    self.S, self.patch))
        if self.W is not None and (self.W < 16 or self.W % 16):
            raise ConfigurationError("W must be a positive multiple of 16, got {0}".format(self.W))
        if self.c < 8 or self.c % 8:
            raise ConfigurationError("c must be a positive multiple of 8, got {0}".format(self.c))
        if self.heads < 1 or self.d % self.heads or self.c % self.heads:
            raise ConfigurationError(
                "d={0} and c={1} must be divisible by heads={2}".format(
                    self.d, self.c, self.heads))
        if self.d % 2:
            raise ConfigurationError("d must be even, got {0}".format(self.d))
        if self.L < 1:
            raise ConfigurationError("L must be >= 1, got {0}".format(self.L))
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigurationError(
                "train_fraction must lie in (0, 1], got {0}".format(self.train_fraction))
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigurationError("lr and weight_decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 0 or self.workers < 1:
            raise ConfigurationError("batch_size and workers must be >= 1, epochs >= 0")
        if self.perturb_max is not None and self.perturb_max < 0:
            raise ConfigurationError("perturb_max must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError("dtype must be float32 or float64, got {0}".format(self.dtype))
        return self

    @property
    def imageShape(self) -> tuple:
        return (self.S, self.S if self.W is None else self.W)

    @property
    def npDtype(self):
        return np.dtype(self.dtype)


NAMED_CONFIGS = {
    "full": dict(adapter_enabled=True, fusion_mode="AtteFFB", cbrnet_enabled=True),
    "no_adapter": dict(adapter_enabled=False, fusion_mode="AtteFFB", cbrnet_enabled=True),
    "no_atteffb": dict(adapter_enabled=True, fusion_mode="Add", cbrnet_enabled=True),
    "no_cbrnet": dict(adapter_enabled=True, fusion_mode="None", cbrnet_enabled=False),
}

ABLATION_LABELS = {
    "full": "Full",
    "no_adapter": "w/o Adapter",
    "no_atteffb": "w/o Atte-FFB",
    "no_cbrnet": "w/o CBR-Net & Atte-FFB",
}


def named_config(base: ModelConfig, name: str) -> ModelConfig:
    if name not in NAMED_CONFIGS:
        raise ConfigurationError(
            "unknown configuration {0!r}; expected one of {1}".format(
                name, ", ".join(NAMED_CONFIGS)))
    return dataclasses.replace(base, **NAMED_CONFIGS[name]).validate()


def _fieldTypes() -> dict:
    return {f.name: f.type for f in dataclasses.fields(ModelConfig)}


def _convert(name: str, kind, text: str, lineno: int):
    try:
        if kind in (bool, "bool"):
            lowered = text.lower()
            if lowered not in ("true", "false"):
                raise ValueError(text)
            return lowered == "true"
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
        if kind in (Optional[int], "Optional[int]"):
            return None if text.lower() == "none" else int(text)
        return text
    except ValueError:
        raise ConfigurationError(
            "line {0}: cannot parse {1} = {2!r}".format(lineno, name, text))


def parse_config(text: str, base: ModelConfig = None) -> ModelConfig:
    """Parse key = value lines; # starts a comment. Keys not given keep the
    base (or default) value."""
    types = _fieldTypes()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError("line {0}: expected key = value".format(lineno))
        if key not in types:
            raise ConfigurationError("line {0}: unknown key {1!r}".format(lineno, key))
        values[key] = _convert(key, types[key], value, lineno)
    base = base if base is not None else ModelConfig()
    return dataclasses.replace(base, **values).validate()


def dump_config(config: ModelConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append("{0} = {1}".format(f.name, value))
    return "\n".join(lines) + "\n"


def load_config(path) -> ModelConfig:
    with open(path) as handle:
        return parse_config(handle.read())


def save_config(path, config: ModelConfig):
    with open(path, "w") as handle:
        handle.write(dump_config(config))
