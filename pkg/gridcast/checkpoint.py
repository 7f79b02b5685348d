from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Union

import numpy as np

from gridcast.config import RunConfig, parse_config
from gridcast.data import NormStats
from gridcast.exception import (
    CheckpointException,
    ConfigException,
    DataException,
    ShapeMismatchException,
)
from gridcast.fields import from_tensors, named_tensors
from gridcast.lstm import StackParams
from gridcast.seq2seq import S2SParams
from gridcast.types import Architecture, Matrix

_logger = logging.getLogger(__name__)

HEADER = "GRIDCAST-CKPT"
VERSION = 1

Model = Union[StackParams, S2SParams]

MODEL_TYPES: Dict[Architecture, type] = {
    Architecture.STANDARD: StackParams,
    Architecture.S2S: S2SParams,
}


@dataclass(eq=False)
class Checkpoint:
    config: RunConfig
    norm: NormStats
    model: Model

    def __post_init__(self) -> None:
        expected = MODEL_TYPES[self.config.architecture]
        if not isinstance(self.model, expected):
            raise CheckpointException(
                f"{self.config.architecture.value} run holds a "
                f"{type(self.model).__name__}"
            )
        if self.model.hidden_dims != self.config.hidden_dims:
            raise CheckpointException(
                f"model layers {self.model.hidden_dims} do not match the "
                f"configured {self.config.hidden_dims}"
            )


def _number(value: float) -> str:
    return format(float(value), ".17g")


def dumps(ckpt: Checkpoint) -> str:
    lines = [f"{HEADER} {VERSION}"]
    lines.extend(f"config {line}" for line in ckpt.config.lines())
    lines.append(f"norm {_number(ckpt.norm.mean)} {_number(ckpt.norm.std)}")
    tensors = named_tensors(ckpt.model)
    lines.append(f"tensors {len(tensors)}")
    for name, t in tensors.items():
        rows, cols = t.shape
        lines.append(f"{name} {rows} {cols}")
        lines.extend(" ".join(_number(v) for v in row) for row in t)
    return "\n".join(lines) + "\n"


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(f".{target.name}.tmp")
    tmp.write_text(dumps(ckpt), encoding="utf-8")
    os.replace(tmp, target)
    _logger.info(f"checkpoint written to {target}")


class _Lines:
    __slots__ = "_it", "number"

    def __init__(self, text: str):
        self._it: Iterator[str] = iter(text.splitlines())
        self.number = 0

    def next(self, what: str) -> str:
        try:
            line = next(self._it)
        except StopIteration:
            raise CheckpointException(
                f"truncated checkpoint: expected {what}"
            ) from None
        self.number += 1
        return line

    def error(self, message: str) -> CheckpointException:
        return CheckpointException(f"line {self.number}: {message}")


def _floats(line: str, count: int, lines: _Lines) -> List[float]:
    try:
        values = [float(v) for v in line.split()]
    except ValueError:
        raise lines.error("non-numeric value") from None
    if len(values) != count:
        raise lines.error(f"expected {count} values, found {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise lines.error("non-finite value")
    return values


def loads(text: str) -> Checkpoint:
    lines = _Lines(text)
    if lines.next("header").strip() != f"{HEADER} {VERSION}":
        raise lines.error(f"not a {HEADER} {VERSION} file")

    config_lines = []
    line = lines.next("configuration")
    while line.startswith("config "):
        config_lines.append(line[len("config ") :])
        line = lines.next("normalization statistics")
    try:
        config = parse_config("\n".join(config_lines))
    except ConfigException as e:
        raise CheckpointException(f"invalid stored configuration: {e}") from e

    key, _, rest = line.partition(" ")
    if key != "norm":
        raise lines.error("expected normalization statistics")
    mean, std = _floats(rest, 2, lines)
    try:
        norm = NormStats(mean, std)
    except DataException as e:
        raise lines.error(str(e)) from e

    key, _, rest = lines.next("tensor count").partition(" ")
    if key != "tensors" or not rest.strip().isdigit():
        raise lines.error("expected the tensor count")
    tensors: Dict[str, Matrix] = {}
    for _ in range(int(rest)):
        head = lines.next("tensor header").split()
        if len(head) != 3 or not (head[1].isdigit() and head[2].isdigit()):
            raise lines.error("expected '<name> <rows> <cols>'")
        name, rows, cols = head[0], int(head[1]), int(head[2])
        if name in tensors:
            raise lines.error(f"duplicate tensor {name}")
        data = [_floats(lines.next(f"row of {name}"), cols, lines) for _ in range(rows)]
        tensors[name] = np.array(data, dtype=np.float64).reshape(rows, cols)

    model_type = MODEL_TYPES[config.architecture]
    try:
        model = from_tensors(model_type, tensors, variant=config.variant)
    except (KeyError, ShapeMismatchException) as e:
        raise CheckpointException(f"inconsistent tensors: {e}") from e
    if set(named_tensors(model)) != set(tensors):
        extra = sorted(set(tensors) - set(named_tensors(model)))
        raise CheckpointException(f"unexpected tensors {extra}")
    return Checkpoint(config, norm, model)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise CheckpointException(f"cannot read checkpoint {path}: {e}") from e
    return loads(text)
