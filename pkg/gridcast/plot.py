from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from gridcast.data import LoadSeries  # noqa: E402
from gridcast.forecast import ForecastResult  # noqa: E402
from gridcast.training import TrainingLog  # noqa: E402

_logger = logging.getLogger(__name__)

SVG_RC = {"svg.hashsalt": "gridcast", "svg.fonttype": "none"}


def _save(fig: plt.Figure, path: Union[str, Path]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)
    _logger.info(f"figure written to {target}")


def plot_forecast(
    result: ForecastResult,
    path: Union[str, Path],
    actual: LoadSeries | None = None,
    history: LoadSeries | None = None,
    title: str | None = None,
) -> None:
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(10, 4))
        if history is not None:
            ax.plot(
                history.timestamps,
                history.values,
                color="lightgray",
                linewidth=1,
                label="Input window",
            )
            ax.axvline(history.end, color="k", linestyle=":", alpha=0.7)
        if actual is not None:
            measured = actual.to_pandas().reindex(result.timestamps)
            ax.plot(result.timestamps, measured.to_numpy(), "b-", label="Actual")
        ax.plot(result.timestamps, result.predictions, "r--", label="Forecast")
        ax.set_title(title or f"{result.mode.value} forecast, {result.horizon} steps")
        ax.set_xlabel("Time")
        ax.set_ylabel("Active power (kW)")
        ax.legend()
        ax.grid(True, linestyle="--", alpha=0.5)
        fig.autofmt_xdate()
        fig.tight_layout()
        _save(fig, path)


def plot_training_log(log: TrainingLog, path: Union[str, Path]) -> None:
    epochs = [e.epoch for e in log.epochs]
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot(epochs, [e.rmse_train for e in log.epochs], "b-", label="Train RMSE")
        tested = [e for e in log.epochs if e.rmse_test is not None]
        if tested:
            ax.plot(
                [e.epoch for e in tested],
                [e.rmse_test for e in tested],
                "r--",
                label="Test RMSE",
            )
        ax.set_xlabel("Epoch")
        ax.set_ylabel("RMSE (normalized)")
        ax.legend()
        ax.grid(True, linestyle="--", alpha=0.5)
        fig.tight_layout()
        _save(fig, path)
