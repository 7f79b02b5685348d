from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator, Union

import numpy as np
import pandas as pd

from gridcast.exception import (
    DataException,
    DuplicateTimestampException,
    ParseException,
)
from gridcast.types import Matrix, Resolution

_logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

BENCHMARK_COLUMNS = (
    "Date",
    "Time",
    "Global_active_power",
    "Global_reactive_power",
    "Voltage",
    "Global_intensity",
    "Sub_metering_1",
    "Sub_metering_2",
    "Sub_metering_3",
)
NUMERIC_COLUMNS = tuple(c.lower() for c in BENCHMARK_COLUMNS[2:])
MISSING = "?"
SERIES_COLUMNS = ("timestamp", "active_power_kw", "valid")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"
MALFORMED_SHOWN = 20


@dataclass(frozen=True)
class RawRecord:
    timestamp: pd.Timestamp
    global_active_power: float | None
    others: tuple[float | None, ...] = ()


@dataclass
class ParseReport:
    total: int = 0
    missing: int = 0
    malformed: int = 0
    malformed_rows: list[int] = field(default_factory=list)

    @property
    def records(self) -> int:
        return self.total - self.malformed

    def as_dict(self) -> dict[str, int]:
        return {
            "rows_read": self.total,
            "records": self.records,
            "missing": self.missing,
            "malformed": self.malformed,
        }


@dataclass(frozen=True, eq=False)
class ParsedDataset:
    """Parsed benchmark rows; missing measurements are NaN, never zero."""

    frame: pd.DataFrame
    report: ParseReport

    def __len__(self) -> int:
        return len(self.frame)

    def records(self) -> Iterator[RawRecord]:
        for row in self.frame.itertuples(index=False):
            values = [None if math.isnan(v) else float(v) for v in row[1:]]
            yield RawRecord(row[0], values[0], tuple(values[1:]))


@dataclass(frozen=True)
class CalendarFeatures:
    day: int
    day_week: int
    hour: int
    minute: int = 0

    def __post_init__(self) -> None:
        for name, low, high in (
            ("day", 1, 31),
            ("day_week", 0, 6),
            ("hour", 0, 23),
            ("minute", 0, 59),
        ):
            value = getattr(self, name)
            if not low <= value <= high:
                raise DataException(f"{name}={value} outside [{low}, {high}]")

    def scaled(self, with_minute: bool = False) -> tuple[float, ...]:
        features = (
            (self.day - 1) / 30.0,
            self.day_week / 6.0,
            self.hour / 23.0,
        )
        return features + (self.minute / 59.0,) if with_minute else features


def calendar_features(timestamp: pd.Timestamp) -> CalendarFeatures:
    ts = pd.Timestamp(timestamp)
    return CalendarFeatures(ts.day, ts.dayofweek, ts.hour, ts.minute)


def calendar_matrix(timestamps: pd.DatetimeIndex, with_minute: bool = False) -> Matrix:
    columns = [
        (timestamps.day.to_numpy() - 1) / 30.0,
        timestamps.dayofweek.to_numpy() / 6.0,
        timestamps.hour.to_numpy() / 23.0,
    ]
    if with_minute:
        columns.append(timestamps.minute.to_numpy() / 59.0)
    return np.column_stack(columns).astype(np.float64)


@dataclass(frozen=True, eq=False)
class LoadSeries:
    """Active power on a strictly regular grid.

    Slot ``i`` is at ``start + i * resolution``. Invalid slots hold NaN and a
    false ``valid`` flag; they are never dropped. ``partition`` marks series
    produced by ``split``.
    """

    resolution: Resolution
    start: pd.Timestamp
    values: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]
    partition: str | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        valid = (
            np.isfinite(values)
            if self.valid is None
            else np.array(self.valid, dtype=bool).reshape(-1) & np.isfinite(values)
        )
        if valid.shape != values.shape:
            raise DataException("values and validity flags differ in length")
        values[~valid] = np.nan
        values.flags.writeable = False
        valid.flags.writeable = False
        object.__setattr__(self, "resolution", Resolution(self.resolution))
        object.__setattr__(self, "start", pd.Timestamp(self.start))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=len(self), freq=self.resolution.freq)

    @property
    def end(self) -> pd.Timestamp:
        return self.timestamp(len(self) - 1)

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())

    def timestamp(self, i: int) -> pd.Timestamp:
        return self.start + i * self.resolution.step

    def index_of(self, timestamp: Any) -> int:
        offset = pd.Timestamp(timestamp) - self.start
        steps, rest = divmod(offset, self.resolution.step)
        if rest != pd.Timedelta(0):
            raise DataException(
                f"{timestamp} is not on the {self.resolution.value} grid"
            )
        return int(steps)

    def slice(self, start: int, stop: int) -> LoadSeries:
        start, stop = max(start, 0), min(stop, len(self))
        return LoadSeries(
            self.resolution,
            self.timestamp(start),
            self.values[start:stop],
            self.valid[start:stop],
            self.partition,
        )

    def to_pandas(self) -> pd.Series:
        return pd.Series(self.values, index=self.timestamps, name="active_power_kw")

    @classmethod
    def from_pandas(cls, series: pd.Series, resolution: Resolution) -> LoadSeries:
        index = pd.DatetimeIndex(series.index)
        grid = pd.date_range(index[0], index[-1], freq=resolution.freq)
        return cls(resolution, grid[0], series.reindex(grid).to_numpy(np.float64))


def parse_dataset(path: PathLike) -> ParsedDataset:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip().lstrip("\ufeff")
        if tuple(header.split(";")) != BENCHMARK_COLUMNS:
            raise ParseException(f"unexpected header {header!r}", str(path), 1)
        widths = [line.count(";") + 1 for line in fh if line.strip()]
    total = len(widths)
    expected = len(BENCHMARK_COLUMNS)
    # rows with too many fields never reach the frame
    short = np.array([w < expected for w in widths if w <= expected], dtype=bool)

    raw = pd.read_csv(
        path,
        sep=";",
        dtype=str,
        na_filter=False,
        on_bad_lines="skip",
        skip_blank_lines=True,
        engine="c",
    ).fillna("")
    timestamps = pd.to_datetime(
        raw["Date"] + " " + raw["Time"], format="%d/%m/%Y %H:%M:%S", errors="coerce"
    )
    frame = pd.DataFrame({"timestamp": timestamps})
    malformed = timestamps.isna().to_numpy() | short[: len(raw)]
    for column, name in zip(BENCHMARK_COLUMNS[2:], NUMERIC_COLUMNS):
        text = raw[column]
        absent = (text == MISSING) | (text.str.strip() == "")
        values = pd.to_numeric(text.where(~absent), errors="coerce")
        malformed |= (values.isna() & ~absent).to_numpy()
        frame[name] = values.astype(np.float64)
    malformed |= (frame["global_active_power"] < 0).to_numpy()

    report = ParseReport(total=total)
    report.malformed = int(malformed.sum()) + (total - len(raw))
    shown = np.flatnonzero(malformed)[:MALFORMED_SHOWN]
    report.malformed_rows = [int(i) for i in shown]
    frame = frame[~malformed].reset_index(drop=True)
    report.missing = int(frame["global_active_power"].isna().sum())
    if report.malformed:
        _logger.warning(
            f"{path}: skipped {report.malformed} malformed lines "
            f"(first data rows: {report.malformed_rows})"
        )
    _logger.info(f"{path}: {report.as_dict()}")
    return ParsedDataset(frame, report)


def _format_value(value: float) -> str:
    return MISSING if math.isnan(value) else repr(float(value))


def write_dataset(dataset: ParsedDataset, path: PathLike) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(";".join(BENCHMARK_COLUMNS) + "\n")
        for row in dataset.frame.itertuples(index=False):
            ts: pd.Timestamp = row[0]
            fields = [f"{ts.day}/{ts.month}/{ts.year}", ts.strftime("%H:%M:%S")]
            fields.extend(_format_value(v) for v in row[1:])
            fh.write(";".join(fields) + "\n")


def to_minute_series(dataset: ParsedDataset | pd.DataFrame) -> LoadSeries:
    frame = dataset.frame if isinstance(dataset, ParsedDataset) else dataset
    if frame.empty:
        raise DataException("no records to place on a minute grid")
    df = frame[["timestamp", "global_active_power"]].copy()
    df["timestamp"] = df["timestamp"].dt.floor("min")
    df = df.sort_values("timestamp", kind="stable")

    duplicated = df.duplicated("timestamp", keep=False)
    if duplicated.any():
        distinct = (
            df[duplicated]
            .groupby("timestamp")["global_active_power"]
            .nunique(dropna=False)
        )
        conflicting = distinct[distinct > 1].index
        if len(conflicting):
            raise DuplicateTimestampException(conflicting)
        df = df.drop_duplicates("timestamp")

    series = df.set_index("timestamp")["global_active_power"]
    return LoadSeries.from_pandas(series, Resolution.MINUTE)


def resample_hourly(s: LoadSeries, min_valid_minutes: int = 1) -> LoadSeries:
    """Average minutes into hours; an hour needs ``min_valid_minutes`` samples."""
    if s.resolution is not Resolution.MINUTE:
        raise DataException(f"cannot resample {s.resolution.value} data to hours")
    hours = s.to_pandas().resample("h")
    means = hours.mean().where(hours.count() >= min_valid_minutes)
    return LoadSeries(Resolution.HOUR, means.index[0], means.to_numpy(np.float64))


def fill_forward(s: LoadSeries) -> LoadSeries:
    filled = s.to_pandas().ffill().to_numpy(np.float64)
    return LoadSeries(s.resolution, s.start, filled, partition=s.partition)


@dataclass(frozen=True)
class SplitSpec:
    train_years: int = 3

    def boundary(self, start: pd.Timestamp) -> pd.Timestamp:
        return pd.Timestamp(start) + pd.DateOffset(years=self.train_years)


def split(
    s: LoadSeries, spec: SplitSpec | None = None
) -> tuple[LoadSeries, LoadSeries]:
    spec = spec or SplitSpec()
    boundary = spec.boundary(s.start)
    n_train = int(s.timestamps.searchsorted(boundary))
    if n_train == 0 or n_train == len(s):
        raise DataException(
            f"split at {boundary} leaves an empty partition "
            f"of the series {s.start} .. {s.end}"
        )
    train = replace(s.slice(0, n_train), partition="train")
    test = replace(s.slice(n_train, len(s)), partition="test")
    return train, test


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.std) and self.std > 0):
            raise DataException(f"normalization std must be positive, got {self.std}")

    def normalize(self, values: Any) -> Any:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, values: Any) -> Any:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def fit_norm(train: LoadSeries) -> NormStats:
    """z-score statistics (population std) of the valid training samples."""
    if train.partition == "test":
        raise DataException("normalization statistics must come from training data")
    valid = train.values[train.valid]
    if len(valid) < 2:
        raise DataException("at least two valid samples are needed to normalize")
    std = float(np.std(valid))
    if std == 0:
        raise DataException("training data has zero variance")
    return NormStats(float(np.mean(valid)), std)


def normalize(values: Any, stats: NormStats) -> Any:
    return stats.normalize(values)


def denormalize(values: Any, stats: NormStats) -> Any:
    return stats.denormalize(values)


def write_series(s: LoadSeries, path: PathLike) -> None:
    frame = pd.DataFrame(
        {
            "timestamp": s.timestamps.strftime(TIMESTAMP_FORMAT),
            "active_power_kw": [
                repr(float(v)) if ok else "" for v, ok in zip(s.values, s.valid)
            ],
            "valid": s.valid.astype(int),
        }
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def read_series(path: PathLike, resolution: Resolution | None = None) -> LoadSeries:
    frame = pd.read_csv(path, dtype={"active_power_kw": np.float64, "valid": np.int64})
    if tuple(frame.columns) != SERIES_COLUMNS:
        raise ParseException(f"unexpected columns {list(frame.columns)}", str(path), 1)
    if frame.empty:
        raise DataException(f"{path}: empty series")
    index = pd.DatetimeIndex(
        pd.to_datetime(frame["timestamp"], format=TIMESTAMP_FORMAT)
    )
    if resolution is None:
        if len(index) < 2:
            raise DataException(f"{path}: cannot infer resolution from one row")
        step = index[1] - index[0]
        hourly = step == pd.Timedelta(hours=1)
        resolution = Resolution.HOUR if hourly else Resolution.MINUTE
    expected = pd.date_range(index[0], periods=len(index), freq=resolution.freq)
    if not index.equals(expected):
        raise DataException(
            f"{path}: timestamps are not on a regular {resolution.value} grid"
        )
    return LoadSeries(
        resolution,
        index[0],
        frame["active_power_kw"].to_numpy(np.float64),
        frame["valid"].to_numpy() != 0,
    )


def load_series(
    path: PathLike, resolution: Resolution, min_valid_minutes: int = 1
) -> LoadSeries:
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().strip().lstrip("\ufeff")
    if header.split(";")[0] == BENCHMARK_COLUMNS[0]:
        series = to_minute_series(parse_dataset(path))
    else:
        series = read_series(path)
    if series.resolution is resolution:
        return series
    if resolution is Resolution.HOUR:
        return resample_hourly(series, min_valid_minutes)
    raise DataException(f"{path} holds hourly data but minute resolution was requested")


def synthetic_load(
    n: int,
    resolution: Resolution = Resolution.HOUR,
    seed: int = 0,
    noise: float = 0.0,
    start: str = "2007-01-01",
) -> LoadSeries:
    hours = np.arange(n) * (resolution.step / pd.Timedelta(hours=1))
    values = 0.8 * np.sin(2 * np.pi * hours / 24.0) + 0.2 * np.sin(
        2 * np.pi * hours / 168.0
    )
    if noise:
        rng = np.random.Generator(np.random.PCG64(seed))
        values = values + noise * rng.standard_normal(n)
    return LoadSeries(resolution, pd.Timestamp(start), values)
