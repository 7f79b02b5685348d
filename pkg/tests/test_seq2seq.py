import typing

import numpy as np
import pandas as pd
import pytest

import gridcast.seq2seq as s2s
from gridcast.data import (
    LoadSeries,
    NormStats,
    calendar_matrix,
    fit_norm,
    synthetic_load,
)
from gridcast.exception import DataException, ShapeMismatchException
from gridcast.fields import from_tensors, named_tensors
from gridcast.lstm import CellState, StackParams, cell_forward, stack_forward
from gridcast.numeric import seeded_rng
from gridcast.seq2seq import (
    Encoding,
    S2SParams,
    decode,
    decoder_inputs,
    encode,
    encoder_inputs,
    joint_train,
    pretrain_encoder,
    s2s_block_loss,
    s2s_blocks,
    s2s_forecast,
    train_s2s,
)
from gridcast.training import TrainConfig, finite_diff_grad, relative_error
from gridcast.types import CellVariant, ForecastMode, Resolution


@pytest.fixture
def model() -> S2SParams:
    return S2SParams.initialize([4], seeded_rng(5), r=0.3)


@pytest.fixture
def series() -> LoadSeries:
    return synthetic_load(24 * 20, noise=0.05, seed=1)


def snapshot(params: typing.Any) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in named_tensors(params).items()}


def unchanged(before: dict[str, np.ndarray], params: typing.Any, prefix: str) -> bool:
    return all(
        np.array_equal(before[k], v)
        for k, v in named_tensors(params).items()
        if k.startswith(prefix)
    )


def test_s2s_params_dimensions(model: S2SParams) -> None:
    assert 4 == model.encoder.input_dim
    assert 3 == model.decoder.input_dim
    assert [4] == model.hidden_dims
    assert not model.with_minute
    minute = S2SParams.initialize([4], seeded_rng(5), with_minute=True)
    assert (5, 4) == (minute.encoder.input_dim, minute.decoder.input_dim)
    assert minute.with_minute


def test_s2s_params_reject_mismatched_stacks() -> None:
    with pytest.raises(ShapeMismatchException):
        S2SParams(StackParams.zeros(4, [3]), StackParams.zeros(3, [4]))
    with pytest.raises(ShapeMismatchException):
        S2SParams(StackParams.zeros(4, [3]), StackParams.zeros(4, [3]))
    with pytest.raises(ShapeMismatchException):
        S2SParams(
            StackParams.zeros(4, [3]),
            StackParams.zeros(3, [3], CellVariant.PAPER_VERBATIM),
        )


def test_encoder_inputs_pair_load_with_next_calendar() -> None:
    stamps = pd.date_range("2007-01-01 01:00", periods=2, freq="h")
    rows = encoder_inputs([0.5, -0.5], stamps)
    assert [0.5, -0.5] == rows[:, 0].tolist()
    assert np.array_equal(calendar_matrix(stamps), rows[:, 1:])
    with pytest.raises(ShapeMismatchException):
        encoder_inputs([0.5], stamps)


def test_zero_encoder_gives_zero_encoding() -> None:
    zero = S2SParams.zeros([3, 2])
    enc = encode(zero, np.ones((6, 4)))
    assert 6 == enc.window_length
    for state in enc.states:
        assert not state.x.any()
        assert not state.o.any()


def test_encoding_shape_does_not_depend_on_window(model: S2SParams) -> None:
    rng = seeded_rng(0)
    short = encode(model, rng.uniform(-1, 1, (24, 4)))
    long = encode(model, rng.uniform(-1, 1, (168, 4)))
    assert [s.x.shape for s in short.states] == [s.x.shape for s in long.states]
    assert [s.o.shape for s in short.states] == [s.o.shape for s in long.states]


def test_single_step_encoding_is_one_cell_step(model: S2SParams) -> None:
    row = np.array([[0.3, 0.1, 0.5, 0.9]])
    enc = encode(model, row)
    expected, _ = cell_forward(
        row, CellState.zeros(4), model.encoder.layers[0], model.variant
    )
    assert np.array_equal(expected.x, enc.states[0].x)
    assert np.array_equal(expected.o, enc.states[0].o)


def test_encode_rejects_empty_or_invalid_window(model: S2SParams) -> None:
    with pytest.raises(DataException):
        encode(model, np.zeros((0, 4)))
    with pytest.raises(DataException):
        encode(model, np.array([[np.nan, 0.0, 0.0, 0.0]]))


def test_zero_decoder_predicts_readout_bias(model: S2SParams) -> None:
    model.decoder = StackParams.zeros(3, [4])
    model.decoder.b_y[0, 0] = -0.75
    enc = encode(model, seeded_rng(0).uniform(-1, 1, (5, 4)))
    assert [-0.75] * 3 == decode(model, enc, np.zeros((3, 3))).tolist()


def test_decode_starts_from_encoder_state(model: S2SParams) -> None:
    enc = encode(model, seeded_rng(0).uniform(-1, 1, (5, 4)))
    calendars = seeded_rng(1).uniform(0, 1, (4, 3))
    expected, _, _ = stack_forward(model.decoder, calendars, enc.states)
    assert np.array_equal(expected, decode(model, enc, calendars))
    norm = NormStats(2.0, 0.5)
    assert np.allclose(expected * 0.5 + 2.0, decode(model, enc, calendars, norm))


def test_decode_rejects_bad_rows(model: S2SParams) -> None:
    enc = Encoding(model.encoder.initial_state(), 1)
    with pytest.raises(DataException):
        decode(model, enc, np.zeros((0, 3)))
    with pytest.raises(ShapeMismatchException):
        decode(model, enc, np.zeros((2, 4)))


@pytest.mark.parametrize("variant", list(CellVariant))
def test_block_gradient_crosses_the_handoff(variant: CellVariant) -> None:
    rng = seeded_rng(21)
    m = S2SParams.initialize([3, 2], rng, variant, r=0.5)
    enc_rows = rng.uniform(-1, 1, (4, 4))
    dec_rows = rng.uniform(0, 1, (3, 3))
    targets = rng.standard_normal(3)
    analytic = s2s_block_loss(m, enc_rows, dec_rows, targets).grads
    numeric = finite_diff_grad(
        lambda: s2s_block_loss(m, enc_rows, dec_rows, targets).loss, named_tensors(m)
    )
    assert set(numeric) == set(analytic)
    for name in numeric:
        assert relative_error(analytic[name], numeric[name]) < 1e-5, name
    assert analytic["encoder.layer0.W_ix"].any()
    assert not analytic["encoder.W_y"].any()
    assert not analytic["encoder.b_y"].any()


def test_blocks_layout(series: LoadSeries) -> None:
    norm = fit_norm(series)
    blocks = s2s_blocks(series, norm, 24, 12)
    assert len(series) - 36 + 1 == len(blocks)
    enc, dec, targets = blocks.block(3)
    assert (24, 4) == enc.shape
    assert (12, 3) == dec.shape
    z = norm.normalize(series.values)
    assert np.array_equal(z[3:27], enc[:, 0])
    assert np.array_equal(z[27:39], targets)
    assert np.array_equal(decoder_inputs(series.timestamps[27:39]), dec)


def test_blocks_skip_invalid_samples() -> None:
    values = synthetic_load(40).values.copy()
    values[17] = np.nan
    gappy = LoadSeries(Resolution.HOUR, "2007-01-01", values)
    blocks = s2s_blocks(gappy, NormStats(0.0, 1.0), 6, 4)
    assert [0, 5, 20, 25, 30] == blocks.starts(5)


def test_blocks_reject_short_series(series: LoadSeries) -> None:
    norm = fit_norm(series)
    with pytest.raises(DataException):
        s2s_blocks(series.slice(0, 10), norm, 8, 4)
    with pytest.raises(DataException):
        s2s_blocks(series, norm, 0, 4)


def test_decoder_rows_never_see_loads(series: LoadSeries) -> None:
    norm = fit_norm(series)
    shifted = LoadSeries(series.resolution, series.start, series.values * 3.0 + 1.0)
    a = s2s_blocks(series, norm, 24, 12)
    b = s2s_blocks(shifted, norm, 24, 12)
    assert np.array_equal(a.decoder, b.decoder)
    assert not np.array_equal(a.encoder, b.encoder)


def test_forecast_decoder_inputs_are_load_free(
    model: S2SParams, series: LoadSeries, monkeypatch: pytest.MonkeyPatch
) -> None:
    seen: list[np.ndarray] = []

    def recording(s: StackParams, inputs: np.ndarray, *args: typing.Any) -> typing.Any:
        if s is model.decoder:
            seen.append(inputs.copy())
        return stack_forward(s, inputs, *args)

    monkeypatch.setattr("gridcast.seq2seq.stack_forward", recording)
    norm = fit_norm(series)
    window = series.slice(0, 48)
    scaled = LoadSeries(window.resolution, window.start, window.values * -2.0)
    a = s2s_forecast(model, window, 12, norm)
    b = s2s_forecast(model, scaled, 12, norm)
    assert 2 == len(seen)
    assert (12, 3) == seen[0].shape
    assert np.array_equal(seen[0], seen[1])
    assert not np.array_equal(a.predictions, b.predictions)


@pytest.mark.parametrize("window", [24, 168])
def test_s2s_forecast(model: S2SParams, series: LoadSeries, window: int) -> None:
    norm = fit_norm(series)
    history = series.slice(0, window)
    first = s2s_forecast(model, history, 24, norm)
    second = s2s_forecast(model, history, 24, norm)
    assert ForecastMode.S2S is first.mode
    assert 24 == first.horizon
    assert history.end + history.resolution.step == first.timestamps[0]
    assert np.array_equal(first.predictions, second.predictions)


def test_s2s_forecast_with_minute_features() -> None:
    minute_model = S2SParams.initialize([3], seeded_rng(0), with_minute=True)
    window = synthetic_load(30, Resolution.MINUTE)
    result = s2s_forecast(minute_model, window, 5, NormStats(0.0, 1.0))
    assert pd.Timestamp("2007-01-01 00:30") == result.timestamps[0]
    assert np.isfinite(result.predictions).all()


def test_s2s_forecast_rejects_gappy_window(model: S2SParams) -> None:
    window = LoadSeries(Resolution.HOUR, "2007-01-01", [1.0, np.nan, 2.0])
    with pytest.raises(DataException):
        s2s_forecast(model, window, 3, NormStats(0.0, 1.0))


def test_pretraining_leaves_decoder_alone(model: S2SParams, series: LoadSeries) -> None:
    before = snapshot(model)
    log = pretrain_encoder(
        model, series, fit_norm(series), TrainConfig(epochs=1, unroll_steps=24)
    )
    assert 1 == len(log)
    assert unchanged(before, model, "decoder.")
    assert not unchanged(before, model, "encoder.")


def test_zero_epochs_leave_model_unchanged(
    model: S2SParams, series: LoadSeries
) -> None:
    before = snapshot(model)
    log = train_s2s(model, series, fit_norm(series), TrainConfig(epochs=0), 24, 12)
    assert 0 == len(log)
    assert unchanged(before, model, "")


def test_joint_training_smallest_block(model: S2SParams, series: LoadSeries) -> None:
    log = joint_train(model, series, fit_norm(series), TrainConfig(epochs=1), 1, 1)
    assert 1 == len(log)
    assert np.isfinite(log.epochs[0].rmse_train)


def test_joint_training_keeps_encoder_readout(
    model: S2SParams, series: LoadSeries
) -> None:
    before = snapshot(model)
    joint_train(model, series, fit_norm(series), TrainConfig(epochs=1), 24, 12)
    assert np.array_equal(before["encoder.W_y"], model.encoder.W_y)
    assert np.array_equal(before["encoder.b_y"], model.encoder.b_y)
    assert not np.array_equal(
        before["encoder.layer0.W_ix"], model.encoder.layers[0].W_ix
    )
    assert not unchanged(before, model, "decoder.")


def test_frozen_encoder_is_not_updated(model: S2SParams, series: LoadSeries) -> None:
    before = snapshot(model)
    joint_train(
        model,
        series,
        fit_norm(series),
        TrainConfig(epochs=1),
        24,
        12,
        freeze_encoder=True,
    )
    assert unchanged(before, model, "encoder.")
    assert not unchanged(before, model, "decoder.")


def test_train_s2s_splits_epochs(
    model: S2SParams, series: LoadSeries, monkeypatch: pytest.MonkeyPatch
) -> None:
    calls: list[tuple[str, int]] = []

    def spy(name: str, f: typing.Callable[..., typing.Any]) -> typing.Any:
        def inner(*args: typing.Any, **kwargs: typing.Any) -> typing.Any:
            calls.append((name, args[3].epochs))
            return f(*args, **kwargs)

        return inner

    monkeypatch.setattr(s2s, "pretrain_encoder", spy("pretrain", s2s.pretrain_encoder))
    monkeypatch.setattr(s2s, "joint_train", spy("joint", s2s.joint_train))
    cfg = TrainConfig(epochs=5, unroll_steps=24)
    log = train_s2s(model, series, fit_norm(series), cfg, 24, 12, block_stride=24)
    assert [("pretrain", 1), ("joint", 4)] == calls
    assert [1, 2, 3, 4, 5] == [e.epoch for e in log.epochs]


def test_train_s2s_rejects_bad_fraction(model: S2SParams, series: LoadSeries) -> None:
    with pytest.raises(ValueError):
        train_s2s(
            model,
            series,
            fit_norm(series),
            TrainConfig(epochs=1),
            24,
            12,
            pretrain_fraction=1.5,
        )


def test_s2s_tensor_names(model: S2SParams) -> None:
    names = list(named_tensors(model))
    assert 2 * (12 + 2) == len(names)
    assert "encoder.layer0.W_ix" == names[0]
    assert "decoder.b_y" == names[-1]


def test_s2s_from_tensors(model: S2SParams) -> None:
    rebuilt = from_tensors(S2SParams, named_tensors(model), variant=model.variant)
    for name, t in named_tensors(model).items():
        assert np.array_equal(t, named_tensors(rebuilt)[name])
    assert rebuilt.encoder is not model.encoder
