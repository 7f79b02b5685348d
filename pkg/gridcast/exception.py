from __future__ import annotations

from typing import Iterable, Sequence


class GridcastException(RuntimeError):
    pass


class ShapeMismatchException(GridcastException, ValueError):
    pass


class ConfigException(GridcastException):
    def __init__(self, errors: str | Sequence[str]):
        self.errors: list[str] = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


class DataException(GridcastException):
    pass


class ParseException(DataException):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ":".join(str(p) for p in (path, line) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)


class DuplicateTimestampException(DataException):
    def __init__(self, timestamps: Iterable[object]):
        self.timestamps = list(timestamps)
        shown = ", ".join(str(t) for t in self.timestamps[:10])
        more = "" if len(self.timestamps) <= 10 else f" (+{len(self.timestamps) - 10})"
        super().__init__(f"conflicting duplicate timestamps: {shown}{more}")


class NumericalException(GridcastException):
    pass


class CheckpointException(GridcastException):
    pass
