from pathlib import Path

import numpy as np
import pandas as pd

from gridcast.data import synthetic_load
from gridcast.forecast import ForecastResult
from gridcast.plot import plot_forecast, plot_training_log
from gridcast.training import EpochRecord, TrainingLog
from gridcast.types import ForecastMode


def result() -> ForecastResult:
    stamps = pd.date_range("2007-01-02", periods=12, freq="h")
    return ForecastResult(stamps, np.linspace(0.0, 1.0, 12), ForecastMode.S2S)


def test_plot_forecast_writes_svg(tmp_path: Path) -> None:
    series = synthetic_load(36)
    path = tmp_path / "figures" / "forecast.svg"
    history, actual = series.slice(0, 24), series.slice(24, 36)
    plot_forecast(result(), path, actual=actual, history=history)
    text = path.read_text(encoding="utf-8")
    assert "<svg" in text
    assert "s2s forecast, 12 steps" in text


def test_plot_forecast_is_byte_stable(tmp_path: Path) -> None:
    plot_forecast(result(), tmp_path / "a.svg", title="same")
    plot_forecast(result(), tmp_path / "b.svg", title="same")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert "dc:date" not in (tmp_path / "a.svg").read_text(encoding="utf-8")


def test_plot_training_log(tmp_path: Path) -> None:
    log = TrainingLog(
        [
            EpochRecord(1, 4.0, 0.8, 0.1, rmse_test=0.9),
            EpochRecord(2, 2.0, 0.5, 0.1),
            EpochRecord(3, 1.0, 0.3, 0.1, rmse_test=0.4),
        ]
    )
    plot_training_log(log, tmp_path / "log.svg")
    text = (tmp_path / "log.svg").read_text(encoding="utf-8")
    assert "Train RMSE" in text
    assert "Test RMSE" in text
