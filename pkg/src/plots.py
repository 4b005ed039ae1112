"""Static SVG figures drawn from the campaign tables."""
from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.fonttype"] = "none"  # keep labels as <text>

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

BAR_GROUP_WIDTH = 0.8
MONTHS = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]


def _grouped_bars(
    ax: plt.Axes, groups: list[str], series: dict[str, list[float]]
) -> None:
    x = np.arange(len(groups))
    width = BAR_GROUP_WIDTH / max(len(series), 1)
    for i, (label, values) in enumerate(series.items()):
        offset = (i - (len(series) - 1) / 2) * width
        ax.bar(x + offset, values, width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(groups)
    ax.axhline(0, color="black", linewidth=0.6)
    ax.legend(fontsize="small")


def _save(fig: plt.Figure, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.debug("Wrote %s", path)
    return path


def plot_annual(annual: pd.DataFrame, path: Path) -> Path:
    """Revenue per year and mode, one bar group per device."""
    devices = sorted(annual["device"].unique())
    series = {}
    for (period, mode), rows in annual.groupby(["period", "mode"], sort=True):
        values = rows.set_index("device")["revenue"]
        series[f"{period} {mode}"] = [float(values.get(device, np.nan)) for device in devices]

    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(devices)), 4))
    _grouped_bars(ax, devices, series)
    ax.set_ylabel("average daily revenue [$]")
    ax.set_title("Average daily revenue by device")
    return _save(fig, path)


def plot_yoy(yoy: pd.DataFrame, path: Path) -> Path:
    """Percentage change against the first year, one bar group per device."""
    devices = sorted(yoy["device"].unique())
    numeric = yoy[yoy["delta_pct"].map(lambda v: not isinstance(v, str))]
    series = {}
    for (year_b, mode), rows in numeric.groupby(["year_b", "mode"], sort=True):
        values = rows.set_index("device")["delta_pct"].astype(float)
        series[f"{year_b} {mode}"] = [float(values.get(device, np.nan)) for device in devices]

    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(devices)), 4))
    _grouped_bars(ax, devices, series)
    ax.set_ylabel("change in revenue [%]")
    if not yoy.empty:
        ax.set_title(f"Revenue change against {int(yoy['year_a'].iloc[0])}")
    return _save(fig, path)


def plot_monthly(monthly: pd.DataFrame, path: Path) -> Path:
    """Twelve-month revenue profile per device and year, one panel per mode."""
    frame = monthly.assign(
        year=monthly["period"].str[:4], month=monthly["period"].str[5:7].astype(int)
    )
    modes = sorted(frame["mode"].unique())

    fig, axes = plt.subplots(
        len(modes), 1, figsize=(8, 3.2 * max(len(modes), 1)), squeeze=False
    )
    for ax, mode in zip(axes[:, 0], modes):
        for (device, year), rows in frame[frame["mode"] == mode].groupby(
            ["device", "year"], sort=True
        ):
            rows = rows.sort_values("month")
            ax.plot(rows["month"], rows["revenue"], marker="o", label=f"{device} {year}")
        ax.set_xticks(range(1, 13))
        ax.set_xticklabels(MONTHS)
        ax.set_ylabel("average daily revenue [$]")
        ax.set_title(mode)
        ax.legend(fontsize="x-small", ncol=2)
    return _save(fig, path)


def plot_all(tables: dict[str, pd.DataFrame], out_dir: Path) -> list[Path]:
    paths = [
        plot_annual(tables["annual"], out_dir / "annual.svg"),
        plot_monthly(tables["monthly"], out_dir / "monthly.svg"),
    ]
    if not tables["yoy"].empty:
        paths.append(plot_yoy(tables["yoy"], out_dir / "yoy.svg"))
    else:
        logger.info("Only one year in the campaign, no year-over-year figure")
    return paths
