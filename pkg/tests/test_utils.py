import logging
from datetime import timedelta

import numpy as np
import pandas as pd

from utils.formatting import format_interval, format_money, format_percent
from utils.logging import CustomFormatter, compact
from utils.table import Table


class TestTable:
    def make_frame(self, rows):
        return pd.DataFrame(
            {"device": [f"dev{i}" for i in range(rows)], "revenue": np.arange(rows) * 1000.5}
        )

    def test_build(self):
        table = Table(self.make_frame(3), "Revenue", formatters={"revenue": format_money})

        text = table.build()

        assert text.startswith("Revenue (3 rows):\n\n")
        lines = text.splitlines()
        assert lines[2].split() == ["device", "revenue"]
        assert lines[-1].split() == ["dev2", "2,001.00"]
        assert "page" not in text

    def test_pages(self):
        frame = self.make_frame(Table.PAGE_SIZE + 5)

        text = Table(frame, "Revenue", page=2).build()

        assert text.endswith("[page 2 out of 2]")
        assert "dev44" in text
        assert "dev0 " not in text

    def test_empty(self):
        assert Table(self.make_frame(0), "Revenue").build() == "Revenue: no rows."


class TestFormatting:
    def test_money(self):
        assert format_money(1234567.891) == "1,234,567.89"
        assert format_money(float("nan")) == "-"

    def test_percent(self):
        assert format_percent(-37.0) == "-37.00%"
        assert format_percent(2.5) == "+2.50%"
        assert format_percent("undefined") == "undefined"

    def test_interval(self):
        assert format_interval(timedelta(hours=1, minutes=2, seconds=3.5)) == "1:02:03"


class TestLogging:
    def test_compact_long_array(self):
        summary = compact(np.arange(100.0))

        assert summary == "array(shape=(100,), min=0, max=99)"

    def test_compact_keeps_short_values(self):
        values = [1, 2, 3]

        assert compact(values) is values

    def test_compact_long_list(self):
        assert compact(list(range(10))) == "[0, 1, 2, 3, 4, 5, 6, 7, ... 2 more]"

    def test_formatter(self):
        formatter = CustomFormatter("%(name)s %(message)s")
        record = logging.LogRecord(
            "essrev.campaign.worker", logging.INFO, __file__, 1, "lmp %s", (np.zeros(50),), None
        )

        text = formatter.format(record)

        assert text == "e.c.worker lmp array(shape=(50,), min=0, max=0)"
