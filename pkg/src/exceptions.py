from __future__ import annotations

from typing import Any


class EssRevError(Exception):
    module = "essrev"
    exit_code = 1

    def __init__(self, message: str | None) -> None:
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return self.message or self.__class__.__name__


class ValidationError(EssRevError):
    module = "cli"


class ContractError(EssRevError):
    """A caller broke an operation's precondition."""

    def __init__(self, message: str | None, module: str) -> None:
        super().__init__(message)
        self.module = module


class StructuralError(EssRevError):
    module = "lp_core"


class NumericError(EssRevError):
    module = "lp_core"


class CertificateError(EssRevError):
    module = "lp_core"
    exit_code = 2

    def __init__(self, details: list[str]) -> None:
        super().__init__("optimality certificate failed: " + "; ".join(details))
        self.details = details


class UnknownTechnologyError(EssRevError, LookupError):
    module = "device"


class ConstructionError(EssRevError):
    module = "market_model"


class ConsistencyError(EssRevError):
    module = "market_model"


class InfeasibleScheduleError(EssRevError):
    module = "market_model"

    def __init__(self, violations: list[str]) -> None:
        super().__init__("settlement refused: " + "; ".join(violations))
        self.violations = violations


class SchemaError(EssRevError):
    module = "data_ingest"

    def __init__(self, column: str, message: str | None = None) -> None:
        super().__init__(message or f"missing column: {column}")
        self.column = column


class ParseError(EssRevError):
    module = "data_ingest"

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class AlignmentError(EssRevError):
    module = "data_ingest"


class GapError(EssRevError):
    module = "data_ingest"

    def __init__(self, start: Any, end: Any, steps: int) -> None:
        super().__init__(
            f"gap of {steps} step(s) from {start} to {end} is too large to "
            f"interpolate"
        )
        self.start = start
        self.end = end
        self.steps = steps


class CoverageError(EssRevError):
    module = "campaign"
    exit_code = 2

    def __init__(self, gaps: list[tuple[str, str]]) -> None:
        listing = ", ".join(f"{location}: {day}" for location, day in gaps[:20])
        if len(gaps) > 20:
            listing += f" (and {len(gaps) - 20} more)"
        super().__init__(f"price data does not cover the date range: {listing}")
        self.gaps = gaps


class SolveFailed(EssRevError):
    module = "cli"
    exit_code = 2


class MissingYearError(EssRevError, LookupError):
    module = "campaign"
