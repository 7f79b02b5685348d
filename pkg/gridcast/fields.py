from __future__ import annotations

import functools
from typing import Any, Callable, Dict, Mapping, TypeVar

import numpy as np
from typing_extensions import get_type_hints

from gridcast.types import GradSet, Matrix

T = TypeVar("T")


def type_dispatch(f: Callable[..., T]) -> Callable[..., T]:
    """Like ``functools.singledispatch`` but dispatching on a class argument."""
    dispatcher = functools.singledispatch(f)

    @functools.wraps(f)
    def inner(value_type: type[Any], *args: Any, **kw: Any) -> T:
        if not isinstance(value_type, type):
            raise TypeError(f"{f.__name__} requires a class as first argument")
        return dispatcher.dispatch(value_type)(value_type, *args, **kw)

    inner.register = dispatcher.register  # type: ignore[attr-defined]
    inner.registry = dispatcher.registry  # type: ignore[attr-defined]
    return inner


@functools.lru_cache()
def matrix_fields(obj: type) -> tuple[str, ...]:
    return tuple(
        name
        for name, hint in get_type_hints(obj).items()
        if hint == Matrix  # type: ignore[comparison-overlap]
    )


@functools.singledispatch
def named_tensors(params: Any, prefix: str = "") -> Dict[str, Matrix]:
    raise TypeError(f"{type(params)!r} has no named tensors")


@type_dispatch
def from_tensors(
    value_type: type[Any], tensors: Mapping[str, Matrix], **kw: Any
) -> Any:
    raise TypeError(f"Cannot build {value_type} from tensors")


def zeros_like(params: Any) -> GradSet:
    return {name: np.zeros_like(t) for name, t in named_tensors(params).items()}


def take(tensors: Mapping[str, Matrix], prefix: str) -> Dict[str, Matrix]:
    """Sub-mapping under ``prefix`` with the prefix stripped."""
    return {k[len(prefix) :]: v for k, v in tensors.items() if k.startswith(prefix)}
