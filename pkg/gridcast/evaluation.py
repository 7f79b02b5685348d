from __future__ import annotations

import asyncio
import functools
import json
import logging
import time
from dataclasses import asdict, dataclass
from typing import Any, Callable, List, Optional

import numpy as np

from gridcast.data import LoadSeries, NormStats
from gridcast.exception import ConfigException, DataException
from gridcast.forecast import (
    ForecastResult,
    delayed_input_forecast,
    one_step_forecast,
    persistence_baseline,
)
from gridcast.lstm import StackParams
from gridcast.seq2seq import CALENDAR_DIM, S2SParams, s2s_forecast
from gridcast.training import rmse
from gridcast.types import ForecastMode
from gridcast.utils import timed

_logger = logging.getLogger(__name__)

# forecaster(window, target) predicts the slots of target; only the one-step
# mode reads its measured values
Forecaster = Callable[[LoadSeries, LoadSeries], ForecastResult]


@functools.singledispatch
def forecaster_for(
    model: Any, norm: NormStats, mode: ForecastMode, lag: int = 1
) -> Forecaster:
    raise TypeError(f"{type(model)!r} cannot forecast")


@forecaster_for.register
def _standard(
    model: StackParams, norm: NormStats, mode: ForecastMode, lag: int = 1
) -> Forecaster:
    with_minute = model.input_dim == CALENDAR_DIM + 2
    mode = ForecastMode(mode)
    if mode is ForecastMode.PERSISTENCE:
        return lambda window, target: persistence_baseline(window, len(target))
    if mode is ForecastMode.ONE_STEP:
        return lambda window, target: one_step_forecast(
            model, window, target, norm, lag, with_minute=with_minute
        )
    if mode in (ForecastMode.RECURSIVE, ForecastMode.DELAYED):
        used = 1 if mode is ForecastMode.RECURSIVE else lag
        return lambda window, target: delayed_input_forecast(
            model,
            window,
            len(target),
            norm,
            used,
            with_minute=with_minute,
            timestamps=target.timestamps,
            mode=mode,
        )
    raise ConfigException(f"mode {mode.value} needs an s2s model")


@forecaster_for.register
def _s2s(
    model: S2SParams, norm: NormStats, mode: ForecastMode, lag: int = 1
) -> Forecaster:
    mode = ForecastMode(mode)
    if mode is ForecastMode.PERSISTENCE:
        return lambda window, target: persistence_baseline(window, len(target))
    if mode is not ForecastMode.S2S:
        raise ConfigException(
            f"an s2s model only forecasts in s2s mode, not {mode.value}"
        )
    return lambda window, target: s2s_forecast(
        model, window, len(target), norm, timestamps=target.timestamps
    )


@dataclass
class EvalReport:
    rmse_norm: float
    rmse_kw: float
    rmse_persistence: float
    rmse_persistence_kw: float
    n_blocks: int
    wall_seconds: float

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def block_starts(
    series: LoadSeries, window: int, horizon: int, max_blocks: Optional[int] = None
) -> List[int]:
    """Starts of the fully valid, non-overlapping blocks of ``series``."""
    if window < 1 or horizon < 1:
        raise DataException(
            f"window and horizon must be at least 1, got {window} and {horizon}"
        )
    span = window + horizon
    invalid = np.concatenate(([0], np.cumsum(~series.valid)))
    starts = [
        s
        for s in range(0, len(series) - span + 1, span)
        if invalid[s + span] == invalid[s]
    ]
    if max_blocks is not None and len(starts) > max_blocks:
        picked = np.linspace(0, len(starts) - 1, max_blocks).round().astype(int)
        starts = [starts[i] for i in picked]
    return starts


def _forecast_block(
    forecaster: Forecaster, series: LoadSeries, start: int, window: int, horizon: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    warmup = series.slice(start, start + window)
    target = series.slice(start + window, start + window + horizon)
    result = forecaster(warmup, target)
    if result.mode is ForecastMode.ONE_STEP:
        # y(t - 1) for every target slot
        baseline = series.values[start + window - 1 : start + window + horizon - 1]
    else:
        baseline = persistence_baseline(warmup, horizon).predictions
    return target.values, np.asarray(result.predictions), baseline


@timed
async def evaluate_blocks(
    forecaster: Forecaster,
    series: LoadSeries,
    norm: NormStats,
    window: int,
    horizon: int,
    *,
    max_blocks: Optional[int] = None,
) -> EvalReport:
    started = time.perf_counter()
    starts = block_starts(series, window, horizon, max_blocks)
    if not starts:
        raise DataException(
            f"no fully valid block of {window} + {horizon} steps to evaluate"
        )
    results = await asyncio.gather(
        *(
            asyncio.to_thread(_forecast_block, forecaster, series, s, window, horizon)
            for s in starts
        )
    )
    actual = np.concatenate([r[0] for r in results])
    predicted = np.concatenate([r[1] for r in results])
    baseline = np.concatenate([r[2] for r in results])
    report = EvalReport(
        rmse_norm=rmse(norm.normalize(actual), norm.normalize(predicted)),
        rmse_kw=rmse(actual, predicted),
        rmse_persistence=rmse(norm.normalize(actual), norm.normalize(baseline)),
        rmse_persistence_kw=rmse(actual, baseline),
        n_blocks=len(starts),
        wall_seconds=time.perf_counter() - started,
    )
    _logger.info(
        f"{report.n_blocks} blocks: rmse_norm={report.rmse_norm:.6g} "
        f"rmse_persistence={report.rmse_persistence:.6g}"
    )
    return report


def evaluate(
    forecaster: Forecaster,
    series: LoadSeries,
    norm: NormStats,
    window: int,
    horizon: int,
    *,
    max_blocks: Optional[int] = None,
) -> EvalReport:
    return asyncio.run(
        evaluate_blocks(
            forecaster, series, norm, window, horizon, max_blocks=max_blocks
        )
    )


def rmse_monitor(
    forecaster: Forecaster,
    series: LoadSeries,
    norm: NormStats,
    window: int,
    horizon: int,
    max_blocks: Optional[int] = 64,
) -> Callable[[], float]:
    """Normalized test RMSE of the current parameters, for per-epoch tracking."""

    def monitor() -> float:
        return evaluate(
            forecaster, series, norm, window, horizon, max_blocks=max_blocks
        ).rmse_norm

    return monitor
