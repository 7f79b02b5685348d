from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Sequence, TypeVar

import numpy as np
import pandas as pd

from gridcast.data import (
    CalendarFeatures,
    LoadSeries,
    NormStats,
    calendar_features,
    calendar_matrix,
)
from gridcast.exception import DataException, ShapeMismatchException
from gridcast.numeric import as_matrix
from gridcast.training import Samples
from gridcast.types import ForecastMode, Matrix, Predictor

_logger = logging.getLogger(__name__)

S = TypeVar("S")

DEFAULT_LAG = 5


@dataclass(frozen=True, eq=False)
class InputVector:
    row: Matrix

    @property
    def y(self) -> float:
        return float(self.row[0, 0])

    @property
    def calendar(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.row[0, 1:])


@dataclass(frozen=True, eq=False)
class ForecastResult:
    timestamps: pd.DatetimeIndex
    predictions: np.ndarray
    mode: ForecastMode

    def __post_init__(self) -> None:
        if len(self.timestamps) != len(self.predictions):
            raise ShapeMismatchException(
                f"{len(self.timestamps)} timestamps for "
                f"{len(self.predictions)} predictions"
            )

    @property
    def horizon(self) -> int:
        return len(self.predictions)

    def to_frame(self, actual: LoadSeries | None = None) -> pd.DataFrame:
        frame = pd.DataFrame(
            {"timestamp": self.timestamps, "predicted": self.predictions}
        )
        frame["actual"] = (
            actual.to_pandas().reindex(self.timestamps).to_numpy()
            if actual is not None
            else np.nan
        )
        return frame[["timestamp", "actual", "predicted"]]


def build_input(
    y_value: float, c: CalendarFeatures, with_minute: bool = False
) -> InputVector:
    if not np.isfinite(y_value):
        raise DataException(f"load input must be finite, got {y_value}")
    return InputVector(as_matrix((y_value,) + c.scaled(with_minute)))


def standard_samples(
    series: LoadSeries, norm: NormStats, lag: int = 1, with_minute: bool = False
) -> Samples:
    """Training rows ``[y(t-lag), calendar(t)] -> y(t)`` in normalized units."""
    if lag < 1:
        raise ValueError(f"lag must be at least 1, got {lag}")
    z = norm.normalize(series.values)
    calendar = calendar_matrix(series.timestamps, with_minute)
    inputs = np.column_stack((z[:-lag], calendar[lag:]))
    return Samples(inputs, z[lag:].copy())


def one_step_predict(
    model: Predictor[S], states: S, iv: InputVector
) -> tuple[float, S]:
    if iv.row.shape[1] != model.input_dim:
        raise ShapeMismatchException(
            f"input vector has {iv.row.shape[1]} features, "
            f"model expects {model.input_dim}"
        )
    return model.step(states, iv.row)


def warmup_values(warmup: LoadSeries) -> np.ndarray:
    if len(warmup) == 0:
        raise DataException("warm-up window is empty")
    if not warmup.valid.all():
        raise DataException(
            f"warm-up window {warmup.start} .. {warmup.end} contains invalid samples"
        )
    return warmup.values


def future_timestamps(
    warmup: LoadSeries, horizon: int, timestamps: Sequence[Any] | None
) -> pd.DatetimeIndex:
    if horizon < 1:
        raise DataException(f"horizon must be at least 1, got {horizon}")
    if timestamps is None:
        return pd.date_range(
            warmup.end + warmup.resolution.step,
            periods=horizon,
            freq=warmup.resolution.freq,
        )
    if len(timestamps) < horizon:
        raise DataException(
            f"{len(timestamps)} future calendar entries for a {horizon}-step horizon"
        )
    return pd.DatetimeIndex(list(timestamps)[:horizon])


def delayed_input_forecast(
    model: Predictor[S],
    warmup: LoadSeries,
    horizon: int,
    norm: NormStats,
    lag: int = DEFAULT_LAG,
    *,
    with_minute: bool = False,
    timestamps: Sequence[Any] | None = None,
    mode: ForecastMode = ForecastMode.DELAYED,
) -> ForecastResult:
    """Forecast ``horizon`` steps after ``warmup`` feeding ``y(t-lag)``.

    The load slot carries the actual value while ``t-lag`` falls inside the
    warm-up window and the model's own prediction afterwards.
    """
    if lag < 1:
        raise ValueError(f"lag must be at least 1, got {lag}")
    values = warmup_values(warmup)
    if len(values) < lag:
        raise DataException(f"warm-up of {len(values)} steps is shorter than lag {lag}")
    future = future_timestamps(warmup, horizon, timestamps)
    z = list(norm.normalize(values))
    state = model.initial_state()
    past = warmup.timestamps
    for t in range(lag, len(values)):
        row = build_input(z[t - lag], calendar_features(past[t]), with_minute)
        _, state = one_step_predict(model, state, row)
    predictions = []
    for j, ts in enumerate(future):
        t = len(values) + j
        row = build_input(z[t - lag], calendar_features(ts), with_minute)
        y_hat, state = one_step_predict(model, state, row)
        z.append(y_hat)
        predictions.append(y_hat)
    return ForecastResult(future, norm.denormalize(predictions), mode)


def recursive_forecast(
    model: Predictor[S],
    warmup: LoadSeries,
    horizon: int,
    norm: NormStats,
    *,
    with_minute: bool = False,
    timestamps: Sequence[Any] | None = None,
) -> ForecastResult:
    return delayed_input_forecast(
        model,
        warmup,
        horizon,
        norm,
        1,
        with_minute=with_minute,
        timestamps=timestamps,
        mode=ForecastMode.RECURSIVE,
    )


def one_step_forecast(
    model: Predictor[S],
    warmup: LoadSeries,
    actual: LoadSeries,
    norm: NormStats,
    lag: int = 1,
    *,
    with_minute: bool = False,
) -> ForecastResult:
    if actual.start != warmup.end + warmup.resolution.step:
        raise DataException("actual values must directly follow the warm-up window")
    joined = LoadSeries(
        warmup.resolution,
        warmup.start,
        np.concatenate((warmup.values, actual.values)),
    )
    values = warmup_values(joined)
    if len(warmup) < lag:
        raise DataException(f"warm-up of {len(warmup)} steps is shorter than lag {lag}")
    z = norm.normalize(values)
    stamps = joined.timestamps
    state = model.initial_state()
    predictions = []
    for t in range(lag, len(values)):
        row = build_input(z[t - lag], calendar_features(stamps[t]), with_minute)
        y_hat, state = one_step_predict(model, state, row)
        if t >= len(warmup):
            predictions.append(y_hat)
    return ForecastResult(
        actual.timestamps, norm.denormalize(predictions), ForecastMode.ONE_STEP
    )


def persistence_baseline(window: LoadSeries, horizon: int) -> ForecastResult:
    observed = window.values[window.valid]
    if len(observed) == 0:
        raise DataException("persistence needs at least one observed value")
    future = future_timestamps(window, horizon, None)
    return ForecastResult(
        future, np.full(horizon, observed[-1]), ForecastMode.PERSISTENCE
    )

