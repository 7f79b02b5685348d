from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, List, NamedTuple, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from gridcast.exception import (
    ConfigException,
    DataException,
    NumericalException,
    ShapeMismatchException,
)
from gridcast.fields import named_tensors
from gridcast.lstm import (
    CellState,
    DropoutSpec,
    StackParams,
    stack_backward,
    stack_forward,
)
from gridcast.numeric import SeededRng, global_l2_norm, seeded_rng
from gridcast.session import training
from gridcast.types import GradSet, Matrix
from gridcast.utils import timed

_logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")

Values = Union[Sequence[float], np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
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

    def __post_init__(self) -> None:
        errors = self.problems()
        if errors:
            raise ConfigException(errors)

    def problems(self) -> list[str]:
        errors = []
        if self.unroll_steps < 1:
            errors.append("unroll_steps must be a positive count")
        if not self.learning_rate > 0:
            errors.append("learning_rate must be positive")
        if not 0 < self.beta1 < 1:
            errors.append("beta1 must be in (0, 1)")
        if not 0 < self.beta2 < 1:
            errors.append("beta2 must be in (0, 1)")
        if not self.epsilon > 0:
            errors.append("epsilon must be positive")
        if not self.clip_threshold > 0:
            errors.append("clip_threshold must be positive")
        if self.epochs < 0:
            errors.append("epochs must not be negative")
        if not 0 <= self.dropout < 1:
            errors.append("dropout must be in [0, 1)")
        if not 0 <= self.seed < 2**64:
            errors.append("seed must be an unsigned 64-bit integer")
        if self.loss_report_stride < 1:
            errors.append("loss_report_stride must be a positive count")
        if self.window_stride < 0:
            errors.append("window_stride must not be negative")
        if self.optimizer not in OPTIMIZERS:
            errors.append(f"optimizer must be one of {', '.join(OPTIMIZERS)}")
        return errors

    @property
    def stride(self) -> int:
        return self.window_stride or self.unroll_steps

    def dropout_spec(self) -> DropoutSpec:
        return DropoutSpec(self.dropout, self.reuse_dropout_mask)


@dataclass(frozen=True, eq=False)
class Samples:
    """Aligned model inputs and one-step targets.

    ``valid[t]`` is false when row ``t`` or its target derives from an
    invalid measurement; windows touching such rows are skipped whole.
    """

    inputs: Matrix
    targets: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.targets):
            raise ShapeMismatchException(
                f"inputs {self.inputs.shape} do not match targets {self.targets.shape}"
            )
        valid = np.isfinite(self.targets) & np.isfinite(self.inputs).all(axis=1)
        if self.valid is not None:
            valid &= np.asarray(self.valid, dtype=bool)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return len(self.targets)

    def windows(self, length: int, stride: int) -> Iterator[int]:
        invalid = np.concatenate(([0], np.cumsum(~self.valid)))
        for start in range(0, len(self) - length + 1, stride):
            if invalid[start + length] == invalid[start]:
                yield start
            else:
                _logger.debug(f"skipping window at {start}: invalid samples")


def _check_pair(y: Values, y_hat: Values) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y, dtype=np.float64).reshape(-1)
    b = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if len(a) != len(b) or len(a) == 0:
        raise ShapeMismatchException(
            f"lengths {len(a)} and {len(b)} differ or are empty"
        )
    return a, b


def sse_loss(y: Values, y_hat: Values) -> float:
    a, b = _check_pair(y, y_hat)
    return float(np.sum((a - b) ** 2))


def rmse(y: Values, y_hat: Values) -> float:
    a, b = _check_pair(y, y_hat)
    return math.sqrt(float(np.mean((a - b) ** 2)))


class WindowResult(NamedTuple):
    loss: float
    grads: GradSet
    y_hat: np.ndarray
    final: List[CellState]


def bptt_window(
    inputs: Matrix,
    targets: Sequence[float] | np.ndarray,
    model: StackParams,
    cfg: TrainConfig,
    rng: SeededRng | None = None,
    initial: Sequence[CellState] | None = None,
) -> WindowResult:
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(y) != len(inputs):
        raise ShapeMismatchException(f"{len(inputs)} input rows for {len(y)} targets")
    if not (np.isfinite(y).all() and np.isfinite(inputs).all()):
        raise DataException("window contains invalid samples")
    y_hat, final, cache = stack_forward(model, inputs, initial, cfg.dropout_spec(), rng)
    grads = stack_backward(model, cache, 2.0 * (y_hat - y)).params
    return WindowResult(sse_loss(y, y_hat), grads, y_hat, final)


def clip_global_norm(g: GradSet, threshold: float) -> GradSet:
    if threshold <= 0:
        raise ValueError(f"clip threshold must be positive, got {threshold}")
    norm = global_l2_norm(g.values())
    if norm <= threshold:
        return dict(g)
    _logger.debug(f"clipping gradient norm {norm:.4g} to {threshold}")
    scale = threshold / norm
    return {name: grad * scale for name, grad in g.items()}


@dataclass(eq=False)
class AdamState:
    m: GradSet
    v: GradSet
    t: int = 0

    @classmethod
    def zeros(cls, params: GradSet) -> AdamState:
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def _check_congruent(params: GradSet, g: GradSet) -> None:
    if params.keys() != g.keys():
        raise ShapeMismatchException(
            f"gradient names {sorted(g)} do not match parameters {sorted(params)}"
        )
    for name, p in params.items():
        if p.shape != g[name].shape:
            raise ShapeMismatchException(
                f"{name}: gradient {g[name].shape} for parameter {p.shape}"
            )


def adam_step(
    params: GradSet, adam: AdamState, g: GradSet, cfg: TrainConfig
) -> tuple[GradSet, AdamState]:
    _check_congruent(params, g)
    adam.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**adam.t
    c2 = 1.0 - b2**adam.t
    for name, p in params.items():
        grad = g[name]
        m = adam.m[name]
        v = adam.v[name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
    return params, adam


def sgd_step(params: GradSet, g: GradSet, cfg: TrainConfig) -> GradSet:
    _check_congruent(params, g)
    for name, p in params.items():
        p -= cfg.learning_rate * g[name]
    return params


def finite_diff_grad(
    loss: Callable[[], float],
    params: GradSet,
    h: float = 1e-5,
    names: Sequence[str] | None = None,
) -> GradSet:
    """Central differences of ``loss`` with respect to every coordinate.

    The arrays in ``params`` are perturbed in place and restored exactly.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    grads: GradSet = {}
    for name in names if names is not None else list(params):
        p = params[name]
        grad = np.zeros_like(p)
        for idx in np.ndindex(*p.shape):
            original = p[idx]
            p[idx] = original + h
            up = loss()
            p[idx] = original - h
            down = loss()
            p[idx] = original
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NumericalException(
                    f"non-finite loss while perturbing {name}{idx}"
                )
            grad[idx] = (up - down) / (2.0 * h)
        grads[name] = grad
    return grads


def relative_error(analytic: Matrix, numeric: Matrix) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


@dataclass
class EpochRecord:
    epoch: int
    sse: float
    rmse_train: float
    seconds: float
    rmse_test: float | None = None


@dataclass
class TrainingLog:
    epochs: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)

    def append(self, record: EpochRecord) -> None:
        self.epochs.append(record)

    @property
    def best_test_rmse(self) -> float | None:
        seen = [e.rmse_test for e in self.epochs if e.rmse_test is not None]
        return min(seen) if seen else None

    @property
    def seconds(self) -> float:
        return sum(e.seconds for e in self.epochs)

    def extend(self, other: TrainingLog) -> None:
        offset = len(self.epochs)
        for record in other.epochs:
            shifted = {**asdict(record), "epoch": record.epoch + offset}
            self.append(EpochRecord(**shifted))

    def write_csv(self, path: Union[str, Path]) -> None:
        frame = pd.DataFrame(
            {
                "epoch": [str(e.epoch) for e in self.epochs],
                "sse": [repr(e.sse) for e in self.epochs],
                "rmse_train": [repr(e.rmse_train) for e in self.epochs],
                "seconds": [f"{e.seconds:.3f}" for e in self.epochs],
            }
        )
        if any(e.rmse_test is not None for e in self.epochs):
            frame["rmse_test"] = [
                "" if e.rmse_test is None else repr(e.rmse_test) for e in self.epochs
            ]
        frame.to_csv(path, index=False, lineterminator="\n")


WindowFn = Callable[[int], Tuple[float, GradSet, int]]


def run_epochs(
    params: GradSet,
    starts: Sequence[int],
    window: WindowFn,
    cfg: TrainConfig,
    *,
    evaluate: Callable[[], float] | None = None,
    eval_every: int = 1,
    frozen: Sequence[str] = (),
) -> TrainingLog:
    """Shared epoch loop: window gradient, clipping, optimizer step.

    ``window(start)`` returns the window loss, its gradient set and the number
    of targets it covers. Parameters whose name starts with one of ``frozen``
    are never updated.
    """
    trainable = {k: p for k, p in params.items() if not k.startswith(tuple(frozen))}
    adam = AdamState.zeros(trainable)
    rng = seeded_rng(cfg.seed)
    log = TrainingLog()
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        sse, count = 0.0, 0
        with training(rng):
            for start in starts:
                loss, grads, n = window(start)
                if not math.isfinite(loss):
                    raise NumericalException(f"non-finite loss in epoch {epoch}")
                grads = {k: grads[k] for k in trainable}
                grads = clip_global_norm(grads, cfg.clip_threshold)
                if not all(np.isfinite(g).all() for g in grads.values()):
                    raise NumericalException(f"non-finite gradient in epoch {epoch}")
                if cfg.optimizer == "adam":
                    adam_step(trainable, adam, grads, cfg)
                else:
                    sgd_step(trainable, grads, cfg)
                sse += loss
                count += n
        record = EpochRecord(epoch, sse, math.sqrt(sse / count), 0.0)
        if evaluate is not None and eval_every and epoch % eval_every == 0:
            record.rmse_test = evaluate()
        record.seconds = time.perf_counter() - started
        log.append(record)
        if epoch % cfg.loss_report_stride == 0 or epoch == cfg.epochs:
            test = record.rmse_test
            _logger.info(
                f"epoch {epoch}: sse={sse:.6g} rmse_train={record.rmse_train:.6g}"
                + ("" if test is None else f" rmse_test={test:.6g}")
            )
    return log


@timed
def fit(
    model: StackParams,
    samples: Samples,
    cfg: TrainConfig,
    *,
    evaluate: Callable[[], float] | None = None,
    eval_every: int = 1,
) -> TrainingLog:
    m = cfg.unroll_steps
    if len(samples) <= m:
        raise DataException(f"{len(samples)} samples do not exceed the {m}-step window")
    if cfg.epochs == 0:
        return TrainingLog()
    starts = list(samples.windows(m, cfg.stride))
    if not starts:
        raise DataException(f"no window of {m} consecutive valid samples")
    _logger.info(f"training on {len(starts)} windows of {m} steps")

    carry: dict[str, Any] = {"end": None, "states": None}

    def window(start: int) -> tuple[float, GradSet, int]:
        initial = carry["states"] if cfg.stateful and carry["end"] == start else None
        result = bptt_window(
            samples.inputs[start : start + m],
            samples.targets[start : start + m],
            model,
            cfg,
            initial=initial,
        )
        carry["end"], carry["states"] = start + m, result.final
        return result.loss, result.grads, m

    return run_epochs(
        named_tensors(model),
        starts,
        window,
        cfg,
        evaluate=evaluate,
        eval_every=eval_every,
    )
