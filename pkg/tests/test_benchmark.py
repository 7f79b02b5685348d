import os

import numpy as np
import pytest
from pytest_benchmark.fixture import BenchmarkFixture

from gridcast.data import fit_norm, synthetic_load
from gridcast.forecast import standard_samples
from gridcast.lstm import CellState, StackParams, cell_forward, stack_forward
from gridcast.numeric import seeded_rng
from gridcast.seq2seq import S2SParams, s2s_block_loss, s2s_blocks
from gridcast.training import TrainConfig, bptt_window
from gridcast.types import CellVariant

if not os.environ.get("BENCHMARK"):
    pytest.skip("Benchmark test only", allow_module_level=True)

UNITS = 32


@pytest.fixture(scope="module")
def model() -> StackParams:
    return StackParams.initialize(4, [UNITS, UNITS], seeded_rng(0))


@pytest.fixture(scope="module")
def inputs() -> np.ndarray:
    series = synthetic_load(24 * 30, noise=0.1)
    return standard_samples(series, fit_norm(series)).inputs


@pytest.mark.parametrize("variant", list(CellVariant))
def test_cell_forward(benchmark: BenchmarkFixture, variant: CellVariant) -> None:
    cell = StackParams.initialize(4, [UNITS], seeded_rng(1)).layers[0]
    row = np.ones((1, 4))
    state = CellState.zeros(UNITS)
    benchmark(cell_forward, row, state, cell, variant)


def test_stack_forward(
    benchmark: BenchmarkFixture, model: StackParams, inputs: np.ndarray
) -> None:
    y_hat, _, _ = benchmark(stack_forward, model, inputs[:168])
    assert 168 == len(y_hat)


def test_bptt_window(
    benchmark: BenchmarkFixture, model: StackParams, inputs: np.ndarray
) -> None:
    cfg = TrainConfig(dropout=0.0)
    targets = np.zeros(50)
    result = benchmark(bptt_window, inputs[:50], targets, model, cfg)
    assert np.isfinite(result.loss)


def test_s2s_block(benchmark: BenchmarkFixture) -> None:
    series = synthetic_load(24 * 10)
    blocks = s2s_blocks(series, fit_norm(series), 168, 60)
    s2s = S2SParams.initialize([UNITS, UNITS], seeded_rng(2))
    result = benchmark(s2s_block_loss, s2s, *blocks.block(0))
    assert 60 == len(result.y_hat)
