"""Compare analytic BPTT gradients against central finite differences."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List

from gridcast.exception import ConfigException
from gridcast.fields import named_tensors
from gridcast.lstm import StackParams, stack_forward
from gridcast.numeric import seeded_rng
from gridcast.seq2seq import CALENDAR_DIM, S2SParams, s2s_block_loss
from gridcast.training import (
    TrainConfig,
    bptt_window,
    finite_diff_grad,
    relative_error,
    sse_loss,
)
from gridcast.types import Architecture, CellVariant

_logger = logging.getLogger(__name__)

MAX_UNITS = 16
MAX_STEPS = 10
TOLERANCE = 1e-5
STEP = 1e-5
INIT_RANGE = 0.5


@dataclass(frozen=True)
class GradCheckCase:
    layers: int = 1
    units: int = 4
    steps: int = 5
    variant: CellVariant = CellVariant.STANDARD
    architecture: Architecture = Architecture.STANDARD
    seed: int = 0

    def problems(self) -> list[str]:
        errors = []
        if not 1 <= self.units <= MAX_UNITS:
            errors.append(f"units must be in [1, {MAX_UNITS}], got {self.units}")
        if not 1 <= self.steps <= MAX_STEPS:
            errors.append(f"steps must be in [1, {MAX_STEPS}], got {self.steps}")
        if not 1 <= self.layers <= 4:
            errors.append(f"layers must be in [1, 4], got {self.layers}")
        return errors


@dataclass
class GradCheckReport:
    case: GradCheckCase
    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self) -> List[str]:
        out = [f"{name} {err:.3e}" for name, err in self.errors.items()]
        out.append(
            f"{'PASS' if self.passed else 'FAIL'} max_rel_error={self.max_error:.3e}"
        )
        return out


def check(case: GradCheckCase) -> GradCheckReport:
    """Gradient check of one random model on one random window."""
    errors = case.problems()
    if errors:
        raise ConfigException(errors)
    rng = seeded_rng(case.seed)
    hidden = [case.units] * case.layers
    if case.architecture is Architecture.S2S:
        model = S2SParams.initialize(hidden, rng, case.variant, r=INIT_RANGE)
        enc = rng.uniform(-1.0, 1.0, (case.steps, CALENDAR_DIM + 1))
        dec = rng.uniform(-1.0, 1.0, (case.steps, CALENDAR_DIM))
        y = rng.standard_normal(case.steps)
        analytic = s2s_block_loss(model, enc, dec, y).grads

        def loss() -> float:
            _, final, _ = stack_forward(model.encoder, enc)
            y_hat, _, _ = stack_forward(model.decoder, dec, final)
            return sse_loss(y, y_hat)

        params = named_tensors(model)
    else:
        stack = StackParams.initialize(
            CALENDAR_DIM + 1, hidden, rng, case.variant, INIT_RANGE
        )
        inputs = rng.uniform(-1.0, 1.0, (case.steps, stack.input_dim))
        y = rng.standard_normal(case.steps)
        analytic = bptt_window(inputs, y, stack, TrainConfig(dropout=0.0)).grads

        def loss() -> float:
            return sse_loss(y, stack_forward(stack, inputs)[0])

        params = named_tensors(stack)
    numeric = finite_diff_grad(loss, params, STEP)
    report = GradCheckReport(case)
    for name in params:
        report.errors[name] = relative_error(analytic[name], numeric[name])
    if not report.passed:
        worst = max(report.errors, key=report.errors.__getitem__)
        _logger.warning(
            f"gradient check failed for {case}: {worst} off by {report.max_error:.3e}"
        )
    return report


def random_cases(count: int = 12, seed: int = 0) -> Iterator[GradCheckCase]:
    """Small random configurations alternating between both cell variants."""
    rng = seeded_rng(seed)
    variants = list(CellVariant)
    for n in range(count):
        yield GradCheckCase(
            layers=int(rng.choice([1, 2, 3])),
            units=int(rng.choice([2, 4, 8])),
            steps=int(rng.choice([1, 5, 10])),
            variant=variants[n % len(variants)],
            seed=int(rng.integers(0, 2**32)),
        )
