from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from datetime import timedelta


def format_interval(interval: timedelta) -> str:
    uptime_str = str(interval)
    time_str, _, _ = uptime_str.partition(".")
    return time_str


def format_money(value: float) -> str:
    if value != value:
        return "-"
    return f"{value:,.2f}"


def format_percent(value: float | str) -> str:
    if isinstance(value, str):
        return value
    return f"{value:+.2f}%"
