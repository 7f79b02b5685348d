import os
import statistics

import pytest

from gridcast.data import LoadSeries, NormStats, fit_norm, synthetic_load
from gridcast.evaluation import evaluate, forecaster_for
from gridcast.forecast import standard_samples
from gridcast.gradcheck import GradCheckCase, check, random_cases
from gridcast.lstm import StackParams
from gridcast.numeric import seeded_rng
from gridcast.seq2seq import S2SParams, train_s2s
from gridcast.training import TrainConfig, fit
from gridcast.types import Architecture, ForecastMode

if not os.environ.get("GRIDCAST_SLOW"):
    pytest.skip("set GRIDCAST_SLOW for acceptance runs", allow_module_level=True)

SEEDS = range(5)
WINDOW, HORIZON = 24, 12


@pytest.fixture(scope="module")
def series() -> LoadSeries:
    return synthetic_load(24 * 70, noise=0.02, seed=11)


@pytest.fixture(scope="module")
def halves(series: LoadSeries) -> tuple[LoadSeries, LoadSeries]:
    cut = 24 * 56
    return series.slice(0, cut), series.slice(cut, len(series))


@pytest.fixture(scope="module")
def norm(halves: tuple[LoadSeries, LoadSeries]) -> NormStats:
    return fit_norm(halves[0])


def s2s_run(
    seed: int, train: LoadSeries, norm: NormStats, freeze: bool = False
) -> tuple[S2SParams, float]:
    model = S2SParams.initialize([8], seeded_rng(seed))
    cfg = TrainConfig(epochs=50, learning_rate=5e-3, dropout=0.0, seed=seed)
    log = train_s2s(
        model,
        train,
        norm,
        cfg,
        WINDOW,
        HORIZON,
        pretrain_fraction=0.0 if freeze else 0.1,
        freeze_encoder=freeze,
    )
    return model, log.epochs[-1].rmse_train


def test_gradient_oracle() -> None:
    for case in random_cases(12):
        report = check(case)
        assert report.passed, (case, report.max_error)
    assert check(GradCheckCase(architecture=Architecture.S2S, steps=10)).passed


def test_s2s_converges_on_held_out_data(
    halves: tuple[LoadSeries, LoadSeries], norm: NormStats
) -> None:
    train, test = halves
    scores = []
    for seed in SEEDS:
        model, _ = s2s_run(seed, train, norm)
        forecaster = forecaster_for(model, norm, ForecastMode.S2S)
        scores.append(evaluate(forecaster, test, norm, WINDOW, HORIZON).rmse_kw)
    assert statistics.median(scores) < 0.1, scores


def test_frozen_encoder_trains_worse(
    halves: tuple[LoadSeries, LoadSeries], norm: NormStats
) -> None:
    joint = statistics.median(s2s_run(s, halves[0], norm)[1] for s in SEEDS)
    frozen = statistics.median(s2s_run(s, halves[0], norm, True)[1] for s in SEEDS)
    assert joint < frozen


def test_standard_stack_fits_the_sine(halves: tuple[LoadSeries, LoadSeries]) -> None:
    train = halves[0]
    norm = fit_norm(train)
    model = StackParams.initialize(4, [8], seeded_rng(0))
    cfg = TrainConfig(epochs=30, learning_rate=5e-3, dropout=0.0, unroll_steps=24)
    log = fit(model, standard_samples(train, norm), cfg)
    assert log.epochs[-1].rmse_train * norm.std < 0.1
