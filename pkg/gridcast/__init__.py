from gridcast.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from gridcast.config import RunConfig, load_config
from gridcast.data import LoadSeries, NormStats, fit_norm, load_series, split
from gridcast.lstm import StackParams
from gridcast.seq2seq import S2SParams, s2s_forecast, train_s2s
from gridcast.training import TrainConfig, fit

__all__ = [
    "Checkpoint",
    "LoadSeries",
    "NormStats",
    "RunConfig",
    "S2SParams",
    "StackParams",
    "TrainConfig",
    "fit",
    "fit_norm",
    "load_checkpoint",
    "load_config",
    "load_series",
    "s2s_forecast",
    "save_checkpoint",
    "split",
    "train_s2s",
]
