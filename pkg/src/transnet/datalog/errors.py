"""Error types raised by the Datalog front end and evaluator."""

from __future__ import annotations


class DatalogError(Exception):
    """Base class for every error raised while handling programs."""


class ParseError(DatalogError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        super().__init__(f"{where}{message}")


class SchemaError(DatalogError):
    """Undeclared relation, arity mismatch or a misplaced head."""


class SafetyError(DatalogError):
    """A variable is used without being bound by a positive literal."""


class StratificationError(DatalogError):
    def __init__(self, message: str, cycle: list[str]):
        self.cycle = cycle
        super().__init__(f"{message}: {' -> '.join(cycle)}")


class EvaluationError(DatalogError):
    """Runtime failure, e.g. arithmetic on a string constant."""
