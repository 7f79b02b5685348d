from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator

from gridcast.numeric import SeededRng

TRAINING: ContextVar[SeededRng | None] = ContextVar("training", default=None)


@contextmanager
def training(rng: SeededRng) -> Iterator[SeededRng]:
    """Run the enclosed forward passes in training mode.

    Dropout masks are drawn from ``rng`` while the context is active; outside
    of it every forward pass is in evaluation mode and dropout is the identity.
    Nested contexts reuse the outermost generator.
    """
    active = TRAINING.get()
    if active is not None:
        yield active
        return
    t = TRAINING.set(rng)
    try:
        yield rng
    finally:
        TRAINING.reset(t)


def dropout_rng() -> SeededRng | None:
    return TRAINING.get()
