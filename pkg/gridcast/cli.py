"""Command-line entry point: ``gridcast resample|train|forecast|eval|gradcheck``."""

from __future__ import annotations

import functools
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, TypeVar

import click
import numpy as np

from gridcast.checkpoint import Checkpoint, Model, load_checkpoint, save_checkpoint
from gridcast.config import RunConfig, load_config
from gridcast.data import (
    TIMESTAMP_FORMAT,
    LoadSeries,
    SplitSpec,
    fill_forward,
    fit_norm,
    load_series,
    parse_dataset,
    resample_hourly,
    split,
    to_minute_series,
    write_series,
)
from gridcast.evaluation import block_starts, evaluate, forecaster_for, rmse_monitor
from gridcast.exception import (
    CheckpointException,
    ConfigException,
    DataException,
    GridcastException,
    NumericalException,
)
from gridcast.forecast import standard_samples
from gridcast.gradcheck import GradCheckCase, check, random_cases
from gridcast.lstm import StackParams
from gridcast.numeric import seeded_rng
from gridcast.plot import plot_forecast, plot_training_log
from gridcast.seq2seq import CALENDAR_DIM, S2SParams, train_s2s
from gridcast.training import TrainingLog, fit
from gridcast.types import Architecture, CellVariant, ForecastMode

_logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

CHECKPOINT_NAME = "checkpoint.ckpt"


@dataclass(frozen=True)
class Common:
    config: Optional[Path]
    data: Optional[Path]
    out: Optional[Path]
    seed: Optional[int]

    def run_config(self) -> RunConfig:
        config = load_config(
            self.config,
            dataset=None if self.data is None else str(self.data),
            output_dir=None if self.out is None else str(self.out),
            seed=self.seed,
        )
        _logger.info(f"configuration {config.as_json()}")
        return config


def _configure_logging(quiet: bool) -> None:
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(logging.WARNING if quiet else logging.INFO)


def common_options(f: F) -> F:
    @click.option(
        "--config", type=click.Path(path_type=Path), help="Run configuration file."
    )
    @click.option(
        "--data", type=click.Path(path_type=Path), help="Dataset or series file."
    )
    @click.option("--out", type=click.Path(path_type=Path), help="Output directory.")
    @click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Random seed.")
    @click.option("--quiet", is_flag=True, help="Only log warnings and errors.")
    @functools.wraps(f)
    def wrapper(
        config: Optional[Path],
        data: Optional[Path],
        out: Optional[Path],
        seed: Optional[int],
        quiet: bool,
        **kw: Any,
    ) -> Any:
        _configure_logging(quiet)
        return f(Common(config, data, out, seed), **kw)

    return wrapper  # type: ignore[return-value]


def exit_code(e: GridcastException) -> int:
    if isinstance(e, ConfigException):
        return EXIT_USAGE
    if isinstance(e, NumericalException):
        return EXIT_NUMERICAL
    if isinstance(e, (DataException, CheckpointException)):
        return EXIT_DATA
    return EXIT_USAGE


def _echo_json(values: dict[str, Any]) -> None:
    click.echo(json.dumps(values, sort_keys=True))


def _write_json(values: dict[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(values, sort_keys=True, indent=2) + "\n"
    path.write_text(text, encoding="utf-8")


def _load(config: RunConfig, data: Optional[Path] = None) -> LoadSeries:
    path = data if data is not None else config.dataset
    if not path:
        raise ConfigException("no dataset given: set dataset or pass --data")
    try:
        series = load_series(path, config.resolution, config.min_valid_minutes)
    except OSError as e:
        raise DataException(f"cannot read {path}: {e}") from e
    return fill_forward(series) if config.fill_forward else series


def _build_model(config: RunConfig) -> Model:
    rng = seeded_rng(config.seed)
    if config.architecture is Architecture.S2S:
        return S2SParams.initialize(
            config.hidden_dims, rng, config.variant, config.minute_feature
        )
    input_dim = CALENDAR_DIM + 1 + int(config.minute_feature)
    return StackParams.initialize(input_dim, config.hidden_dims, rng, config.variant)


@click.group()
@click.version_option(package_name="gridcast")
def cli() -> None:
    """Building load forecasting with LSTM and encoder-decoder networks."""


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("target", type=click.Path(dir_okay=False, path_type=Path))
@common_options
def resample(common: Common, source: Path, target: Path) -> None:
    """Average the minute benchmark file SOURCE into an hourly series TARGET."""
    config = common.run_config()
    dataset = parse_dataset(source)
    hourly = resample_hourly(to_minute_series(dataset), config.min_valid_minutes)
    target.parent.mkdir(parents=True, exist_ok=True)
    write_series(hourly, target)
    report = dataset.report.as_dict()
    report.update(hours=len(hourly), valid_hours=hourly.valid_count)
    _logger.info(f"wrote {len(hourly)} hours to {target}")
    _echo_json(report)


@cli.command()
@common_options
def train(common: Common) -> None:
    """Train a model as configured and write its checkpoint and training log."""
    config = common.run_config()
    series = _load(config)
    train_part, test_part = split(series, SplitSpec(config.train_years))
    norm = fit_norm(train_part)
    model = _build_model(config)
    cfg = config.train_config()
    out = Path(config.output_dir)

    monitor = None
    if config.eval_every:
        if block_starts(test_part, config.window, config.horizon):
            forecaster = forecaster_for(model, norm, config.forecast_mode, config.lag)
            monitor = rmse_monitor(
                forecaster, test_part, norm, config.window, config.horizon
            )
        else:
            _logger.warning("test partition has no valid block; test RMSE not tracked")

    try:
        if isinstance(model, S2SParams):
            log = train_s2s(
                model,
                train_part,
                norm,
                cfg,
                config.window,
                config.horizon,
                pretrain_fraction=config.pretrain_fraction,
                block_stride=config.block_stride,
                freeze_encoder=config.freeze_encoder,
                evaluate=monitor,
                eval_every=config.eval_every,
            )
        else:
            samples = standard_samples(
                train_part, norm, config.lag, config.minute_feature
            )
            log = fit(
                model, samples, cfg, evaluate=monitor, eval_every=config.eval_every
            )
    except NumericalException:
        save_checkpoint(Checkpoint(config, norm, model), out / CHECKPOINT_NAME)
        _logger.error(
            "training diverged; saved the parameters in use when the loss "
            "became non-finite"
        )
        raise

    save_checkpoint(Checkpoint(config, norm, model), out / CHECKPOINT_NAME)
    log.write_csv(out / "training_log.csv")
    if len(log):
        plot_training_log(log, out / "training_log.svg")
    report = _train_report(log)
    _write_json(report, out / "train_report.json")
    _echo_json(report)


def _train_report(log: TrainingLog) -> dict[str, Any]:
    last = log.epochs[-1] if len(log) else None
    return {
        "epochs": len(log),
        "rmse_train": None if last is None else last.rmse_train,
        "rmse_test": None if last is None else last.rmse_test,
        "best_test_rmse": log.best_test_rmse,
        "seconds": round(log.seconds, 3),
    }


def _windows(
    series: LoadSeries, start: int, window: int, horizon: int
) -> tuple[LoadSeries, LoadSeries]:
    if start - window < 0:
        raise DataException(
            f"a {window}-step window before {series.timestamp(start)} "
            f"extends past the series start {series.start}"
        )
    if start > len(series):
        raise DataException(f"{series.timestamp(start)} lies after the series end")
    known = series.values[start : start + horizon]
    padded = np.concatenate((known, np.full(horizon - len(known), np.nan)))
    target = LoadSeries(series.resolution, series.timestamp(start), padded)
    return series.slice(start - window, start), target


@cli.command()
@click.option(
    "--checkpoint",
    "checkpoint_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.option("--from", "start", help="First forecast timestamp (default: test start).")
@click.option("--window", type=click.IntRange(min=1), help="Input window length.")
@click.option("--horizon", type=click.IntRange(min=1), help="Forecast horizon.")
@click.option("--mode", type=click.Choice([m.value for m in ForecastMode]))
@click.option("--plot/--no-plot", default=False, help="Also write an SVG figure.")
@common_options
def forecast(
    common: Common,
    checkpoint_path: Path,
    start: Optional[str],
    window: Optional[int],
    horizon: Optional[int],
    mode: Optional[str],
    plot: bool,
) -> None:
    """Forecast from a checkpoint and write timestamp,actual,predicted rows."""
    ckpt = load_checkpoint(checkpoint_path)
    config = ckpt.config
    _logger.info(f"configuration {config.as_json()}")
    series = _load(config, common.data)
    window = window or config.window
    horizon = horizon or config.horizon
    if start is None:
        first = split(series, SplitSpec(config.train_years))[1].start
    else:
        first = start
    warmup, target = _windows(series, series.index_of(first), window, horizon)
    forecaster = forecaster_for(
        ckpt.model, ckpt.norm, ForecastMode(mode or config.forecast_mode), config.lag
    )
    result = forecaster(warmup, target)

    out = common.out or Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = result.to_frame(target)
    frame["timestamp"] = frame["timestamp"].dt.strftime(TIMESTAMP_FORMAT)
    frame.to_csv(out / "forecast.csv", index=False, na_rep="", lineterminator="\n")
    if plot:
        plot_forecast(result, out / "forecast.svg", actual=target, history=warmup)
    _logger.info(f"wrote {result.horizon} predictions to {out / 'forecast.csv'}")


@cli.command(name="eval")
@click.option(
    "--checkpoint",
    "checkpoint_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.option("--window", type=click.IntRange(min=1), help="Input window length.")
@click.option("--horizon", type=click.IntRange(min=1), help="Forecast horizon.")
@click.option("--mode", type=click.Choice([m.value for m in ForecastMode]))
@click.option(
    "--partition",
    type=click.Choice(["train", "test", "all"]),
    default="test",
    show_default=True,
)
@click.option("--max-blocks", type=click.IntRange(min=1), help="Evaluate a subset.")
@common_options
def evaluate_command(
    common: Common,
    checkpoint_path: Path,
    window: Optional[int],
    horizon: Optional[int],
    mode: Optional[str],
    partition: str,
    max_blocks: Optional[int],
) -> None:
    """Sweep non-overlapping blocks and report RMSE next to persistence."""
    ckpt = load_checkpoint(checkpoint_path)
    config = ckpt.config
    _logger.info(f"configuration {config.as_json()}")
    series = _load(config, common.data)
    if partition != "all":
        train_part, test_part = split(series, SplitSpec(config.train_years))
        series = train_part if partition == "train" else test_part
    forecaster = forecaster_for(
        ckpt.model, ckpt.norm, ForecastMode(mode or config.forecast_mode), config.lag
    )
    report = evaluate(
        forecaster,
        series,
        ckpt.norm,
        window or config.window,
        horizon or config.horizon,
        max_blocks=max_blocks,
    )
    if common.out is not None:
        _write_json(report.as_dict(), common.out / "metrics.json")
    _echo_json(report.as_dict())


@cli.command()
@click.option("--layers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--units", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--steps", type=click.IntRange(min=1), default=5, show_default=True)
@click.option(
    "--variant",
    type=click.Choice([v.value for v in CellVariant]),
    default=CellVariant.STANDARD.value,
    show_default=True,
)
@click.option(
    "--architecture",
    type=click.Choice([a.value for a in Architecture]),
    default=Architecture.STANDARD.value,
    show_default=True,
)
@click.option(
    "--random",
    "random_count",
    type=click.IntRange(min=0),
    default=0,
    help="Also check this many random small configurations.",
)
@common_options
def gradcheck(
    common: Common,
    layers: int,
    units: int,
    steps: int,
    variant: str,
    architecture: str,
    random_count: int,
) -> None:
    """Check analytic gradients against central finite differences."""
    seed = common.seed or 0
    cases = [
        GradCheckCase(
            layers, units, steps, CellVariant(variant), Architecture(architecture), seed
        )
    ]
    cases.extend(random_cases(random_count, seed))
    failed = 0
    for case in cases:
        report = check(case)
        click.echo(
            f"# layers={case.layers} units={case.units} steps={case.steps} "
            f"variant={case.variant.value} architecture={case.architecture.value}"
        )
        for line in report.lines():
            click.echo(line)
        failed += not report.passed
    if failed:
        raise NumericalException(f"{failed} of {len(cases)} gradient checks failed")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        result = cli.main(
            args=list(argv) if argv is not None else None,
            prog_name="gridcast",
            standalone_mode=False,
        )
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except GridcastException as e:
        _logger.error(str(e))
        return exit_code(e)
    return result if isinstance(result, int) else EXIT_OK
