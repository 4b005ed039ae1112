from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any, Mapping, Union

import numpy as np

if TYPE_CHECKING:
    from logging import LogRecord


LoggingArgs = Union[Mapping[str, Any], tuple]

MAX_ITEMS = 8


def compact(value: Any) -> Any:
    """One-line summary of long arrays and sequences."""
    if isinstance(value, np.ndarray) and value.size > MAX_ITEMS:
        if value.size and np.issubdtype(value.dtype, np.number):
            return (
                f"array(shape={value.shape}, min={np.nanmin(value):.6g}, "
                f"max={np.nanmax(value):.6g})"
            )
        return f"array(shape={value.shape}, dtype={value.dtype})"
    if isinstance(value, (list, tuple)) and len(value) > MAX_ITEMS:
        head = ", ".join(str(item) for item in value[:MAX_ITEMS])
        return f"[{head}, ... {len(value) - MAX_ITEMS} more]"
    return value


class CustomFormatter(logging.Formatter):
    def _compact_logging_args(self, args: LoggingArgs) -> LoggingArgs:
        if isinstance(args, dict):
            return {key: compact(value) for key, value in args.items()}
        else:
            return tuple(compact(arg) for arg in args)

    def _shorten_module_name(self, name: str) -> str:
        parts = name.split(".")
        if len(parts) > 1:
            parts_short = []
            for part in parts[:-1]:
                parts_short.append(part[:1])
            return ".".join(parts_short + parts[-1:])
        return name

    def format(self, record: LogRecord) -> str:
        record.name = self._shorten_module_name(record.name)
        if record.args:
            record.args = self._compact_logging_args(record.args)
        return super().format(record)
