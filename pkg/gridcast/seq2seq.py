from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, List, NamedTuple, Sequence

import numpy as np
import pandas as pd

from gridcast.data import LoadSeries, NormStats, calendar_matrix
from gridcast.exception import DataException, ShapeMismatchException
from gridcast.fields import from_tensors, named_tensors, take
from gridcast.forecast import (
    ForecastResult,
    future_timestamps,
    standard_samples,
    warmup_values,
)
from gridcast.lstm import (
    CellState,
    DropoutSpec,
    StackParams,
    stack_backward,
    stack_forward,
)
from gridcast.numeric import DEFAULT_INIT_RANGE, SeededRng
from gridcast.training import TrainConfig, TrainingLog, fit, run_epochs, sse_loss
from gridcast.types import CellVariant, ForecastMode, GradSet, Matrix
from gridcast.utils import timed

_logger = logging.getLogger(__name__)

CALENDAR_DIM = 3
DEFAULT_PRETRAIN_FRACTION = 0.2


@dataclass(eq=False)
class S2SParams:
    encoder: StackParams
    decoder: StackParams

    def __post_init__(self) -> None:
        if self.encoder.hidden_dims != self.decoder.hidden_dims:
            raise ShapeMismatchException(
                f"encoder layers {self.encoder.hidden_dims} do not match "
                f"decoder layers {self.decoder.hidden_dims}"
            )
        if self.encoder.input_dim != self.decoder.input_dim + 1:
            raise ShapeMismatchException(
                f"encoder input {self.encoder.input_dim} must be the decoder "
                f"input {self.decoder.input_dim} plus the load"
            )
        if self.decoder.input_dim not in (CALENDAR_DIM, CALENDAR_DIM + 1):
            raise ShapeMismatchException(
                f"decoder input has {self.decoder.input_dim} calendar features"
            )
        if self.encoder.variant is not self.decoder.variant:
            raise ShapeMismatchException("encoder and decoder use different cells")

    @classmethod
    def initialize(
        cls,
        hidden_dims: Sequence[int],
        rng: SeededRng,
        variant: CellVariant = CellVariant.STANDARD,
        with_minute: bool = False,
        r: float = DEFAULT_INIT_RANGE,
    ) -> S2SParams:
        calendar = CALENDAR_DIM + int(with_minute)
        return cls(
            StackParams.initialize(calendar + 1, hidden_dims, rng, variant, r),
            StackParams.initialize(calendar, hidden_dims, rng, variant, r),
        )

    @classmethod
    def zeros(
        cls,
        hidden_dims: Sequence[int],
        variant: CellVariant = CellVariant.STANDARD,
        with_minute: bool = False,
    ) -> S2SParams:
        calendar = CALENDAR_DIM + int(with_minute)
        return cls(
            StackParams.zeros(calendar + 1, hidden_dims, variant),
            StackParams.zeros(calendar, hidden_dims, variant),
        )

    @property
    def variant(self) -> CellVariant:
        return self.encoder.variant

    @property
    def hidden_dims(self) -> list[int]:
        return self.encoder.hidden_dims

    @property
    def with_minute(self) -> bool:
        return self.decoder.input_dim == CALENDAR_DIM + 1


@dataclass(frozen=True, eq=False)
class Encoding:
    states: List[CellState]
    window_length: int


def decoder_inputs(timestamps: pd.DatetimeIndex, with_minute: bool = False) -> Matrix:
    """The only constructor of decoder rows: calendar features, nothing else."""
    return calendar_matrix(pd.DatetimeIndex(timestamps), with_minute)


def encoder_inputs(
    z: Sequence[float] | np.ndarray,
    next_timestamps: pd.DatetimeIndex,
    with_minute: bool = False,
) -> Matrix:
    """Rows ``[z(t), calendar(t + 1)]``; ``next_timestamps[t]`` is ``t + 1``."""
    values = np.asarray(z, dtype=np.float64).reshape(-1, 1)
    if len(values) != len(next_timestamps):
        raise ShapeMismatchException(
            f"{len(values)} loads for {len(next_timestamps)} calendar rows"
        )
    calendar = calendar_matrix(pd.DatetimeIndex(next_timestamps), with_minute)
    return np.hstack((values, calendar))


def encode(model: S2SParams, inputs: Matrix) -> Encoding:
    if len(inputs) == 0:
        raise DataException("cannot encode an empty window")
    if not np.isfinite(inputs).all():
        raise DataException("encoder window contains invalid samples")
    _, final, _ = stack_forward(model.encoder, inputs)
    return Encoding(final, len(inputs))


def decode(
    model: S2SParams,
    enc: Encoding,
    calendars: Matrix,
    norm: NormStats | None = None,
) -> np.ndarray:
    """Run the decoder from ``enc`` over ``n`` calendar rows.

    Predictions are denormalized when ``norm`` is given.
    """
    if len(calendars) == 0:
        raise DataException("decoding needs a horizon of at least one step")
    if calendars.shape[1] != model.decoder.input_dim:
        raise ShapeMismatchException(
            f"decoder rows have {calendars.shape[1]} features, "
            f"expected {model.decoder.input_dim}"
        )
    y_hat, _, _ = stack_forward(model.decoder, calendars, enc.states)
    return y_hat if norm is None else norm.denormalize(y_hat)


@dataclass(frozen=True, eq=False)
class Blocks:
    """Aligned encoder rows, decoder rows and targets of one series.

    Block ``s`` encodes ``encoder[s : s + window]`` and predicts
    ``targets[s + window : s + window + horizon]`` from the decoder rows of
    the same slots.
    """

    encoder: Matrix
    decoder: Matrix
    targets: np.ndarray
    window: int
    horizon: int

    def __len__(self) -> int:
        return max(len(self.targets) - self.window - self.horizon + 1, 0)

    def block(self, s: int) -> tuple[Matrix, Matrix, np.ndarray]:
        m, n = self.window, self.horizon
        return (
            self.encoder[s : s + m],
            self.decoder[s + m : s + m + n],
            self.targets[s + m : s + m + n],
        )

    def starts(self, stride: int) -> List[int]:
        span = self.window + self.horizon
        invalid = np.concatenate(([0], np.cumsum(~np.isfinite(self.targets))))
        starts = []
        for s in range(0, len(self), stride):
            if invalid[s + span] == invalid[s]:
                starts.append(s)
            else:
                _logger.debug(f"skipping block at {s}: invalid samples")
        return starts


def s2s_blocks(
    series: LoadSeries,
    norm: NormStats,
    window: int,
    horizon: int,
    with_minute: bool = False,
) -> Blocks:
    if window < 1 or horizon < 1:
        raise DataException(
            f"window and horizon must be at least 1, got {window} and {horizon}"
        )
    if len(series) < window + horizon:
        raise DataException(
            f"{len(series)} samples are fewer than window {window} + horizon {horizon}"
        )
    z = norm.normalize(series.values)
    stamps = series.timestamps
    encoder = encoder_inputs(z[:-1], stamps[1:], with_minute)
    return Blocks(encoder, decoder_inputs(stamps, with_minute), z, window, horizon)


class BlockResult(NamedTuple):
    loss: float
    grads: GradSet
    y_hat: np.ndarray


def s2s_block_loss(
    model: S2SParams,
    enc_rows: Matrix,
    dec_rows: Matrix,
    targets: np.ndarray,
    dropout: DropoutSpec | None = None,
    rng: SeededRng | None = None,
) -> BlockResult:
    """Decoder loss of one block and its gradient for both networks.

    The gradient reaching the initial decoder state is passed back into the
    encoder as the gradient of its final state; the encoder readout gets none.
    """
    _, enc_final, enc_cache = stack_forward(
        model.encoder, enc_rows, None, dropout, rng
    )
    y_hat, _, dec_cache = stack_forward(
        model.decoder, dec_rows, enc_final, dropout, rng
    )
    dec_back = stack_backward(model.decoder, dec_cache, 2.0 * (y_hat - targets))
    enc_back = stack_backward(
        model.encoder, enc_cache, np.zeros(len(enc_rows)), dec_back.initial
    )
    grads = {f"encoder.{k}": g for k, g in enc_back.params.items()}
    grads.update({f"decoder.{k}": g for k, g in dec_back.params.items()})
    return BlockResult(sse_loss(targets, y_hat), grads, y_hat)


def pretrain_encoder(
    model: S2SParams,
    series: LoadSeries,
    norm: NormStats,
    cfg: TrainConfig,
    *,
    evaluate: Callable[[], float] | None = None,
    eval_every: int = 1,
) -> TrainingLog:
    samples = standard_samples(series, norm, 1, model.with_minute)
    _logger.info(f"pre-training encoder for {cfg.epochs} epochs")
    return fit(model.encoder, samples, cfg, evaluate=evaluate, eval_every=eval_every)


@timed
def joint_train(
    model: S2SParams,
    series: LoadSeries,
    norm: NormStats,
    cfg: TrainConfig,
    window: int,
    horizon: int,
    *,
    block_stride: int = 0,
    freeze_encoder: bool = False,
    evaluate: Callable[[], float] | None = None,
    eval_every: int = 1,
) -> TrainingLog:
    blocks = s2s_blocks(series, norm, window, horizon, model.with_minute)
    if cfg.epochs == 0:
        return TrainingLog()
    starts = blocks.starts(block_stride or horizon)
    if not starts:
        raise DataException(
            f"no block of {window + horizon} consecutive valid samples"
        )
    _logger.info(
        f"joint training on {len(starts)} blocks of {window} + {horizon} steps"
        + (" with a frozen encoder" if freeze_encoder else "")
    )
    dropout = cfg.dropout_spec()

    def step(start: int) -> tuple[float, GradSet, int]:
        result = s2s_block_loss(model, *blocks.block(start), dropout)
        return result.loss, result.grads, horizon

    return run_epochs(
        named_tensors(model),
        starts,
        step,
        cfg,
        evaluate=evaluate,
        eval_every=eval_every,
        frozen=("encoder.",) if freeze_encoder else (),
    )


def train_s2s(
    model: S2SParams,
    series: LoadSeries,
    norm: NormStats,
    cfg: TrainConfig,
    window: int,
    horizon: int,
    *,
    pretrain_fraction: float = DEFAULT_PRETRAIN_FRACTION,
    block_stride: int = 0,
    freeze_encoder: bool = False,
    evaluate: Callable[[], float] | None = None,
    eval_every: int = 1,
) -> TrainingLog:
    if not 0 <= pretrain_fraction <= 1:
        raise ValueError(
            f"pretrain fraction must be in [0, 1], got {pretrain_fraction}"
        )
    pre_epochs = int(math.floor(cfg.epochs * pretrain_fraction + 0.5))
    log = TrainingLog()
    if pre_epochs:
        log.extend(
            pretrain_encoder(
                model,
                series,
                norm,
                _with_epochs(cfg, pre_epochs),
                evaluate=evaluate,
                eval_every=eval_every,
            )
        )
    log.extend(
        joint_train(
            model,
            series,
            norm,
            _with_epochs(cfg, cfg.epochs - pre_epochs),
            window,
            horizon,
            block_stride=block_stride,
            freeze_encoder=freeze_encoder,
            evaluate=evaluate,
            eval_every=eval_every,
        )
    )
    return log


def _with_epochs(cfg: TrainConfig, epochs: int) -> TrainConfig:
    return replace(cfg, epochs=epochs)


def s2s_forecast(
    model: S2SParams,
    window: LoadSeries,
    horizon: int,
    norm: NormStats,
    *,
    timestamps: Sequence[Any] | None = None,
) -> ForecastResult:
    values = warmup_values(window)
    future = future_timestamps(window, horizon, timestamps)
    following = window.timestamps[1:].append(future[:1])
    enc = encode(
        model, encoder_inputs(norm.normalize(values), following, model.with_minute)
    )
    predictions = decode(model, enc, decoder_inputs(future, model.with_minute), norm)
    return ForecastResult(future, predictions, ForecastMode.S2S)


@named_tensors.register
def _s2s_tensors(params: S2SParams, prefix: str = "") -> dict[str, Matrix]:
    tensors = named_tensors(params.encoder, f"{prefix}encoder.")
    tensors.update(named_tensors(params.decoder, f"{prefix}decoder."))
    return tensors


@from_tensors.register(S2SParams)
def _s2s_from_tensors(
    value_type: type[S2SParams],
    tensors: Any,
    variant: CellVariant = CellVariant.STANDARD,
    **_: object,
) -> S2SParams:
    return value_type(
        from_tensors(StackParams, take(tensors, "encoder."), variant=variant),
        from_tensors(StackParams, take(tensors, "decoder."), variant=variant),
    )
