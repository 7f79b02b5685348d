from __future__ import annotations

import inspect
import logging
import time
from typing import Any, Callable

import wrapt

_logger = logging.getLogger(__name__)


@wrapt.decorator
def timed(
    wrapped: Callable[..., Any], instance: Any, args: Any, kwargs: Any
) -> Any:
    """Log the wall time of every call at DEBUG level."""
    if inspect.iscoroutinefunction(wrapped):

        async def run() -> Any:
            started = time.perf_counter()
            try:
                return await wrapped(*args, **kwargs)
            finally:
                _report(wrapped, started)

        return run()

    started = time.perf_counter()
    try:
        return wrapped(*args, **kwargs)
    finally:
        _report(wrapped, started)


def _report(wrapped: Callable[..., Any], started: float) -> None:
    _logger.debug(f"{wrapped.__qualname__} took {time.perf_counter() - started:.3f}s")
