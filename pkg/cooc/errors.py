from __future__ import annotations

from typing import Sequence, Tuple


class CoocError(Exception):
    """Base class for every error raised by the library."""


class ShapeError(CoocError):
    pass


class BatchTooSmallError(ShapeError):
    pass


class ConfigError(CoocError):
    pass


class ContractError(CoocError):
    pass


class GenerationError(CoocError):
    def __init__(self, message: str, pairs: Sequence[Tuple[str, str]] = ()) -> None:
        self.pairs = tuple(pairs)
        if self.pairs:
            listed = ", ".join(f"({a}, {b})" for a, b in self.pairs)
            message = f"{message}: {listed}"
        super().__init__(message)


class ParseError(CoocError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingDivergedError(CoocError):
    def __init__(self, epoch: int, batch: int, detail: str = "") -> None:
        self.epoch = epoch
        self.batch = batch
        msg = f"non-finite loss at epoch {epoch}, batch {batch}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)
