from __future__ import annotations

import math
from functools import cached_property
from typing import Any, Callable, Optional

import pandas as pd

Formatter = Callable[[Any], str]


class Table:
    PAGE_SIZE = 40

    def __init__(
        self,
        frame: pd.DataFrame,
        title: str,
        page: int = 1,
        formatters: Optional[dict[str, Formatter]] = None,
    ) -> None:
        self.frame = frame
        self.title = title
        self.page = page
        self.formatters = formatters or {}

    @cached_property
    def total(self) -> int:
        return len(self.frame)

    @cached_property
    def num_pages(self) -> int:
        return math.ceil(self.total / self.PAGE_SIZE)

    def build(self) -> str:
        if not self.total:
            return self.get_empty_message()

        offset = (self.page - 1) * self.PAGE_SIZE
        page = self.frame.iloc[offset : offset + self.PAGE_SIZE]

        table = self.get_title()
        table += "\n".join(self.get_rows(page))
        if self.num_pages > 1:
            table += f"\n\n[page {self.page} out of {self.num_pages}]"

        return table

    def get_title(self) -> str:
        return f"{self.title} ({self.total} rows):\n\n"

    def _cell(self, column: str, value: Any) -> str:
        formatter = self.formatters.get(column)
        if formatter is not None:
            return formatter(value)
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    def get_rows(self, page: pd.DataFrame) -> list[str]:
        columns = [str(column) for column in page.columns]
        cells = [
            [self._cell(column, value) for column, value in zip(columns, row)]
            for row in page.itertuples(index=False)
        ]
        widths = [
            max([len(column)] + [len(row[i]) for row in cells])
            for i, column in enumerate(columns)
        ]

        def line(values: list[str]) -> str:
            # text left, numbers right
            return "  ".join(
                value.rjust(width) if _numeric(value) else value.ljust(width)
                for value, width in zip(values, widths)
            ).rstrip()

        rows = [line(columns), line(["-" * width for width in widths])]
        rows.extend(line(row) for row in cells)
        return rows

    def get_empty_message(self) -> str:
        return f"{self.title}: no rows."


def _numeric(text: str) -> bool:
    try:
        float(text.replace(",", "").rstrip("%"))
    except ValueError:
        return False
    return True
