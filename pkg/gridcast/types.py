from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from typing import Dict, Generic, TypeVar

import numpy as np
import numpy.typing as npt
import pandas as pd
from typing_extensions import TypeAlias

Matrix: TypeAlias = npt.NDArray[np.float64]
GradSet: TypeAlias = Dict[str, Matrix]

S = TypeVar("S")


class CellVariant(str, enum.Enum):
    STANDARD = "standard"
    PAPER_VERBATIM = "paper_verbatim"


class Architecture(str, enum.Enum):
    STANDARD = "standard"
    S2S = "s2s"


class ForecastMode(str, enum.Enum):
    ONE_STEP = "one_step"
    RECURSIVE = "recursive"
    DELAYED = "delayed"
    S2S = "s2s"
    PERSISTENCE = "persistence"


class Resolution(str, enum.Enum):
    MINUTE = "minute"
    HOUR = "hour"

    @property
    def freq(self) -> str:
        return "min" if self is Resolution.MINUTE else "h"

    @property
    def step(self) -> pd.Timedelta:
        return pd.Timedelta(minutes=1) if self is Resolution.MINUTE else pd.Timedelta(
            hours=1
        )


class Predictor(ABC, Generic[S]):
    """Anything that turns one input row into a one-step load estimate.

    Rows follow the fixed ``[y, day, day_week, hour(, minute)]`` layout and
    estimates are in normalized units.
    """

    @property
    @abstractmethod
    def input_dim(self) -> int:
        ...

    @abstractmethod
    def initial_state(self) -> S:
        ...

    @abstractmethod
    def step(self, state: S, row: Matrix) -> tuple[float, S]:
        ...


__all__ = [
    "Architecture",
    "CellVariant",
    "ForecastMode",
    "GradSet",
    "Matrix",
    "Predictor",
    "Resolution",
]
