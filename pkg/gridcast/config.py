from __future__ import annotations

import dataclasses
import enum
import functools
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Union

from typing_extensions import get_type_hints

from gridcast.exception import ConfigException
from gridcast.fields import type_dispatch
from gridcast.training import TrainConfig
from gridcast.types import Architecture, CellVariant, ForecastMode, Resolution

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    unroll_steps: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_threshold: float = 5.0
    epochs: int = 10
    dropout: float = 0.2
    seed: int = 0
    loss_report_stride: int = 1
    window_stride: int = 0
    stateful: bool = False
    reuse_dropout_mask: bool = False
    optimizer: str = "adam"
    architecture: Architecture = Architecture.STANDARD
    variant: CellVariant = CellVariant.STANDARD
    layers: int = 1
    units: int = 10
    resolution: Resolution = Resolution.HOUR
    window: int = 60
    horizon: int = 60
    lag: int = 1
    dataset: str = ""
    output_dir: str = "out"
    pretrain_fraction: float = 0.2
    block_stride: int = 0
    freeze_encoder: bool = False
    eval_every: int = 1
    fill_forward: bool = False
    min_valid_minutes: int = 1
    minute_feature: bool = False
    train_years: int = 3

    def __post_init__(self) -> None:
        for name, kind in config_fields().items():
            if issubclass(kind, enum.Enum):
                try:
                    object.__setattr__(self, name, kind(getattr(self, name)))
                except ValueError:
                    pass
        errors = self.problems()
        if errors:
            raise ConfigException(errors)

    def problems(self) -> list[str]:
        errors: list[str] = []
        for name, kind in config_fields().items():
            value = getattr(self, name)
            if issubclass(kind, enum.Enum) and not isinstance(value, kind):
                choices = ", ".join(m.value for m in kind)
                errors.append(f"{name} must be one of {choices}, got {value!r}")
        try:
            self.train_config()
        except ConfigException as e:
            errors.extend(e.errors)
        for name in ("layers", "units", "window", "horizon", "lag", "train_years"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be a positive count")
        if not 0 <= self.pretrain_fraction <= 1:
            errors.append("pretrain_fraction must be in [0, 1]")
        if self.block_stride < 0:
            errors.append("block_stride must not be negative")
        if self.eval_every < 0:
            errors.append("eval_every must not be negative")
        if not 1 <= self.min_valid_minutes <= 60:
            errors.append("min_valid_minutes must be in [1, 60]")
        if self.minute_feature and self.resolution is not Resolution.MINUTE:
            errors.append("minute_feature requires minute resolution")
        if self.freeze_encoder and self.architecture is not Architecture.S2S:
            errors.append("freeze_encoder only applies to the s2s architecture")
        return errors

    @property
    def hidden_dims(self) -> list[int]:
        return [self.units] * self.layers

    @property
    def forecast_mode(self) -> ForecastMode:
        if self.architecture is Architecture.S2S:
            return ForecastMode.S2S
        return ForecastMode.RECURSIVE if self.lag == 1 else ForecastMode.DELAYED

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            **{f.name: getattr(self, f.name) for f in dataclasses.fields(TrainConfig)}
        )

    def with_overrides(self, **overrides: Any) -> RunConfig:
        return dataclasses.replace(
            self, **{k: v for k, v in overrides.items() if v is not None}
        )

    def lines(self) -> List[str]:
        """``key = value`` lines that ``parse_config`` reads back unchanged."""
        return [
            f"{name} = {serialize(getattr(self, name))}" for name in config_fields()
        ]

    def as_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, default=str)


@functools.lru_cache()
def config_fields() -> Dict[str, type]:
    hints = get_type_hints(RunConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(RunConfig)}


@functools.singledispatch
def serialize(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    raise TypeError(f"Serialization of {type(value)!r} not supported")


@serialize.register
def _(value: float) -> str:
    return repr(value)


@serialize.register
def _(value: str) -> str:
    return json.dumps(str(value.value if isinstance(value, enum.Enum) else value))


@type_dispatch
def deserialize(value_type: type[Any], value: Any) -> Any:
    if value_type is bool:
        if not isinstance(value, bool):
            raise TypeError(f"expected true or false, got {value!r}")
        return value
    if value_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
        return value
    if value_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if value_type is str:
        if not isinstance(value, str):
            raise TypeError(f"expected a quoted string, got {value!r}")
        return value
    raise TypeError(f"Cannot deserialize {value!r} to type {value_type}")


@deserialize.register(enum.Enum)
def _(value_type: type[enum.Enum], value: Any) -> enum.Enum:
    if not isinstance(value, str):
        raise TypeError(f"expected a quoted string, got {value!r}")
    try:
        return value_type(value)
    except ValueError:
        choices = ", ".join(str(m.value) for m in value_type)
        raise ValueError(f"expected one of {choices}, got {value!r}") from None


def from_mapping(values: Mapping[str, Any], **overrides: Any) -> RunConfig:
    """Validate every key and value together, reporting all problems at once."""
    known = config_fields()
    errors: list[str] = []
    converted: dict[str, Any] = {}
    for key, value in values.items():
        if key not in known:
            errors.append(f"unknown key {key!r}")
            continue
        try:
            converted[key] = deserialize(known[key], value)
        except (TypeError, ValueError) as e:
            errors.append(f"{key}: {e}")
    converted.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = RunConfig(**converted)
    except ConfigException as e:
        errors.extend(e.errors)
    if errors:
        raise ConfigException(errors)
    return config


def parse_config(text: str, **overrides: Any) -> RunConfig:
    try:
        values = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigException(f"malformed configuration: {e}") from e
    return from_mapping(values, **overrides)


def load_config(path: Union[str, Path, None], **overrides: Any) -> RunConfig:
    if path is None:
        return from_mapping({}, **overrides)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigException(f"cannot read configuration {path}: {e}") from e
    _logger.debug(f"loading configuration from {path}")
    return parse_config(text, **overrides)

