from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from gridcast.exception import GridcastException, ShapeMismatchException
from gridcast.fields import from_tensors, matrix_fields, named_tensors, take, zeros_like
from gridcast.numeric import (
    DEFAULT_INIT_RANGE,
    SeededRng,
    hadamard,
    map_sigmoid,
    map_tanh,
    matmul,
    uniform_init,
    zeros,
)
from gridcast.session import dropout_rng
from gridcast.types import CellVariant, GradSet, Matrix, Predictor

_logger = logging.getLogger(__name__)

GATES = ("i", "f", "o", "u")

Masks = List[Optional[Matrix]]


@dataclass(eq=False)
class CellParams:
    W_ix: Matrix
    W_im: Matrix
    W_fx: Matrix
    W_fm: Matrix
    W_ox: Matrix
    W_om: Matrix
    W_ux: Matrix
    W_um: Matrix
    b_i: Matrix
    b_f: Matrix
    b_o: Matrix
    b_u: Matrix

    def __post_init__(self) -> None:
        d, h = self.input_dim, self.hidden_dim
        for gate in GATES:
            for name, shape in (
                (f"W_{gate}x", (d, h)),
                (f"W_{gate}m", (h, h)),
                (f"b_{gate}", (1, h)),
            ):
                actual = getattr(self, name).shape
                if actual != shape:
                    raise ShapeMismatchException(
                        f"{name} has shape {actual}, expected {shape}"
                    )

    @property
    def input_dim(self) -> int:
        return int(self.W_ix.shape[0])

    @property
    def hidden_dim(self) -> int:
        return int(self.W_ix.shape[1])

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        hidden_dim: int,
        rng: SeededRng,
        r: float = DEFAULT_INIT_RANGE,
    ) -> CellParams:
        weights = {}
        for gate in GATES:
            weights[f"W_{gate}x"] = uniform_init(input_dim, hidden_dim, r, rng)
            weights[f"W_{gate}m"] = uniform_init(hidden_dim, hidden_dim, r, rng)
        biases = {f"b_{gate}": zeros(1, hidden_dim) for gate in GATES}
        return cls(**weights, **biases)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> CellParams:
        tensors = {}
        for gate in GATES:
            tensors[f"W_{gate}x"] = zeros(input_dim, hidden_dim)
            tensors[f"W_{gate}m"] = zeros(hidden_dim, hidden_dim)
            tensors[f"b_{gate}"] = zeros(1, hidden_dim)
        return cls(**tensors)


@dataclass(frozen=True, eq=False)
class CellState:
    """Memory ``x`` and output ``o`` of a cell; also used for their gradients."""

    x: Matrix
    o: Matrix

    @classmethod
    def zeros(cls, hidden_dim: int) -> CellState:
        return cls(zeros(1, hidden_dim), zeros(1, hidden_dim))


@dataclass(frozen=True, eq=False)
class CellRecord:
    input: Matrix
    o_prev: Matrix
    x_prev: Matrix
    i_g: Matrix
    f_g: Matrix
    o_g: Matrix
    u: Matrix
    x: Matrix
    o: Matrix


class CellGradients(NamedTuple):
    params: GradSet
    input: Matrix
    prev: CellState


@dataclass(frozen=True)
class DropoutSpec:
    rate: float = 0.2
    reuse_mask: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")

    def draw(self, shape: tuple[int, ...], rng: SeededRng) -> Matrix:
        keep = 1.0 - self.rate
        return (rng.random(shape) < keep).astype(np.float64) / keep


@dataclass(frozen=True, eq=False)
class StepCache:
    layers: List[CellRecord]
    masks: Masks
    top: Matrix
    y_hat: float


@dataclass(eq=False)
class ForwardCache:
    initial: List[CellState]
    steps: List[StepCache] = field(default_factory=list)


@dataclass(eq=False)
class StackParams(Predictor[List[CellState]]):
    layers: List[CellParams]
    W_y: Matrix
    b_y: Matrix
    variant: CellVariant = CellVariant.STANDARD

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeMismatchException("a stack needs at least one layer")
        for lower, (n, upper) in zip(self.layers, enumerate(self.layers[1:], 1)):
            if upper.input_dim != lower.hidden_dim:
                raise ShapeMismatchException(
                    f"layer{n} expects input {upper.input_dim}, "
                    f"layer{n - 1} produces {lower.hidden_dim}"
                )
        top = self.layers[-1].hidden_dim
        if self.W_y.shape != (top, 1):
            raise ShapeMismatchException(
                f"W_y has shape {self.W_y.shape}, expected {(top, 1)}"
            )
        if self.b_y.shape != (1, 1):
            raise ShapeMismatchException(f"b_y has shape {self.b_y.shape}")
        self.variant = CellVariant(self.variant)

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        hidden_dims: Sequence[int],
        rng: SeededRng,
        variant: CellVariant = CellVariant.STANDARD,
        r: float = DEFAULT_INIT_RANGE,
    ) -> StackParams:
        layers = []
        for hidden_dim in hidden_dims:
            layers.append(CellParams.initialize(input_dim, hidden_dim, rng, r))
            input_dim = hidden_dim
        return cls(layers, uniform_init(input_dim, 1, r, rng), zeros(1, 1), variant)

    @classmethod
    def zeros(
        cls,
        input_dim: int,
        hidden_dims: Sequence[int],
        variant: CellVariant = CellVariant.STANDARD,
    ) -> StackParams:
        layers = []
        for hidden_dim in hidden_dims:
            layers.append(CellParams.zeros(input_dim, hidden_dim))
            input_dim = hidden_dim
        return cls(layers, zeros(input_dim, 1), zeros(1, 1), variant)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_dims(self) -> list[int]:
        return [layer.hidden_dim for layer in self.layers]

    def initial_state(self) -> List[CellState]:
        return [CellState.zeros(h) for h in self.hidden_dims]

    def step(
        self, state: List[CellState], row: Matrix
    ) -> tuple[float, List[CellState]]:
        new_states, y_hat, _ = stack_step(row, state, self)
        return y_hat, new_states


def cell_forward(
    input: Matrix, prev: CellState, p: CellParams, v: CellVariant
) -> tuple[CellState, CellRecord]:
    if input.ndim != 2 or input.shape[1] != p.input_dim:
        raise ShapeMismatchException(
            f"input has shape {input.shape}, expected (1, {p.input_dim})"
        )
    for name in ("x", "o"):
        shape = getattr(prev, name).shape
        if shape != (input.shape[0], p.hidden_dim):
            raise ShapeMismatchException(
                f"prev.{name} has shape {shape}, expected {(1, p.hidden_dim)}"
            )

    def pre(gate: str) -> Matrix:
        return (
            matmul(input, getattr(p, f"W_{gate}x"))
            + matmul(prev.o, getattr(p, f"W_{gate}m"))
            + getattr(p, f"b_{gate}")
        )

    i_g = map_sigmoid(pre("i"))
    f_g = map_sigmoid(pre("f"))
    o_g = map_sigmoid(pre("o"))
    u = map_tanh(pre("u"))
    x = hadamard(f_g, prev.x) + hadamard(i_g, u)
    o = hadamard(o_g, map_tanh(x if v is CellVariant.STANDARD else u))
    record = CellRecord(input, prev.o, prev.x, i_g, f_g, o_g, u, x, o)
    return CellState(x, o), record


def cell_backward(
    rec: CellRecord,
    grad_o: Matrix,
    grad_x_next: Matrix,
    p: CellParams,
    v: CellVariant,
) -> CellGradients:
    """Backpropagate one cached cell step.

    ``grad_o`` is the total gradient reaching the step's output and
    ``grad_x_next`` the gradient reaching its memory from the following step.
    """
    for f in dataclasses.fields(rec):
        if getattr(rec, f.name) is None:
            raise GridcastException(f"forward record is missing {f.name}")

    squashed = map_tanh(rec.x if v is CellVariant.STANDARD else rec.u)
    d_og = grad_o * squashed
    d_squashed = grad_o * rec.o_g * (1.0 - squashed * squashed)
    if v is CellVariant.STANDARD:
        d_x = grad_x_next + d_squashed
        d_u = d_x * rec.i_g
    else:
        d_x = grad_x_next
        d_u = d_x * rec.i_g + d_squashed

    d_pre = {
        "i": d_x * rec.u * rec.i_g * (1.0 - rec.i_g),
        "f": d_x * rec.x_prev * rec.f_g * (1.0 - rec.f_g),
        "o": d_og * rec.o_g * (1.0 - rec.o_g),
        "u": d_u * (1.0 - rec.u * rec.u),
    }
    grads: GradSet = {}
    d_input = np.zeros_like(rec.input)
    d_o_prev = np.zeros_like(rec.o_prev)
    for gate, dz in d_pre.items():
        W_x = getattr(p, f"W_{gate}x")
        W_m = getattr(p, f"W_{gate}m")
        grads[f"W_{gate}x"] = rec.input.T @ dz
        grads[f"W_{gate}m"] = rec.o_prev.T @ dz
        grads[f"b_{gate}"] = dz.sum(axis=0, keepdims=True)
        d_input += dz @ W_x.T
        d_o_prev += dz @ W_m.T
    return CellGradients(grads, d_input, CellState(d_x * rec.f_g, d_o_prev))


def draw_masks(s: StackParams, dropout: DropoutSpec, rng: SeededRng) -> Masks:
    """Index ``l`` masks the input of layer ``l``; the last entry the readout."""
    masks: Masks = [None]
    for layer in s.layers[:-1]:
        masks.append(dropout.draw((1, layer.hidden_dim), rng))
    masks.append(dropout.draw((1, s.layers[-1].hidden_dim), rng))
    return masks


def stack_step(
    input: Matrix,
    prev_states: Sequence[CellState],
    s: StackParams,
    dropout: DropoutSpec | None = None,
    rng: SeededRng | None = None,
    masks: Masks | None = None,
) -> tuple[List[CellState], float, StepCache]:
    if len(prev_states) != len(s.layers):
        raise ShapeMismatchException(
            f"{len(prev_states)} previous states for {len(s.layers)} layers"
        )
    rng = rng if rng is not None else dropout_rng()
    if masks is None:
        if dropout is not None and dropout.rate > 0 and rng is not None:
            masks = draw_masks(s, dropout, rng)
        else:
            masks = [None] * (len(s.layers) + 1)

    h = input
    states: List[CellState] = []
    records: List[CellRecord] = []
    for n, (p, prev) in enumerate(zip(s.layers, prev_states)):
        mask = masks[n]
        if mask is not None:
            h = hadamard(h, mask)
        state, record = cell_forward(h, prev, p, s.variant)
        states.append(state)
        records.append(record)
        h = state.o
    if masks[-1] is not None:
        h = hadamard(h, masks[-1])
    y_hat = float(matmul(h, s.W_y)[0, 0] + s.b_y[0, 0])
    return states, y_hat, StepCache(records, masks, h, y_hat)


def stack_forward(
    s: StackParams,
    inputs: Matrix,
    initial: Sequence[CellState] | None = None,
    dropout: DropoutSpec | None = None,
    rng: SeededRng | None = None,
) -> tuple[np.ndarray, List[CellState], ForwardCache]:
    states = list(initial) if initial is not None else s.initial_state()
    cache = ForwardCache(list(states))
    rng = rng if rng is not None else dropout_rng()
    shared: Masks | None = None
    if dropout is not None and dropout.reuse_mask and dropout.rate > 0:
        if rng is not None:
            shared = draw_masks(s, dropout, rng)
    y_hat = np.empty(inputs.shape[0])
    for t in range(inputs.shape[0]):
        states, y_hat[t], step = stack_step(
            inputs[t : t + 1], states, s, dropout, rng, shared
        )
        cache.steps.append(step)
    return y_hat, states, cache


class StackGradients(NamedTuple):
    params: GradSet
    initial: List[CellState]
    inputs: Matrix


def stack_backward(
    s: StackParams,
    cache: ForwardCache,
    d_y_hat: Sequence[float] | np.ndarray,
    d_final: Sequence[CellState] | None = None,
) -> StackGradients:
    """Backpropagation through time over a cached unrolled window.

    ``d_y_hat[t]`` is the loss gradient with respect to the readout at step
    ``t`` and ``d_final`` the gradient reaching the last states from outside
    the window (the decoder, for an encoder). Parameter gradients are summed
    over steps since the parameters are shared by every step.
    """
    n_layers = len(s.layers)
    grads = zeros_like(s)
    carry = (
        list(d_final)
        if d_final is not None
        else [CellState.zeros(h) for h in s.hidden_dims]
    )
    d_inputs = np.zeros((len(cache.steps), s.input_dim))
    for t in reversed(range(len(cache.steps))):
        step = cache.steps[t]
        dy = float(d_y_hat[t])
        grads["W_y"] += step.top.T * dy
        grads["b_y"] += dy
        d_h = dy * s.W_y.T
        if step.masks[-1] is not None:
            d_h = d_h * step.masks[-1]
        for n in reversed(range(n_layers)):
            back = cell_backward(
                step.layers[n],
                d_h + carry[n].o,
                carry[n].x,
                s.layers[n],
                s.variant,
            )
            for name, g in back.params.items():
                grads[f"layer{n}.{name}"] += g
            carry[n] = back.prev
            d_h = back.input
            mask = step.masks[n]
            if mask is not None:
                d_h = d_h * mask
        d_inputs[t] = d_h[0]
    return StackGradients(grads, carry, d_inputs)


@named_tensors.register
def _cell_tensors(params: CellParams, prefix: str = "") -> dict[str, Matrix]:
    return {
        f"{prefix}{name}": getattr(params, name) for name in matrix_fields(CellParams)
    }


@named_tensors.register
def _stack_tensors(params: StackParams, prefix: str = "") -> dict[str, Matrix]:
    tensors: dict[str, Matrix] = {}
    for n, layer in enumerate(params.layers):
        tensors.update(named_tensors(layer, f"{prefix}layer{n}."))
    tensors[f"{prefix}W_y"] = params.W_y
    tensors[f"{prefix}b_y"] = params.b_y
    return tensors


@from_tensors.register(CellParams)
def _cell_from_tensors(
    value_type: type[CellParams], tensors: Mapping[str, Matrix], **_: object
) -> CellParams:
    return value_type(**{name: tensors[name] for name in matrix_fields(value_type)})


@from_tensors.register(StackParams)
def _stack_from_tensors(
    value_type: type[StackParams],
    tensors: Mapping[str, Matrix],
    variant: CellVariant = CellVariant.STANDARD,
    **_: object,
) -> StackParams:
    layers = []
    while f"layer{len(layers)}.W_ix" in tensors:
        layer = take(tensors, f"layer{len(layers)}.")
        layers.append(from_tensors(CellParams, layer))
    return value_type(layers, tensors["W_y"], tensors["b_y"], CellVariant(variant))
