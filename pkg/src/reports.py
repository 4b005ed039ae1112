"""Files written by the command line: schedules, revenue summaries and the
campaign revenue tables."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from campaign import CampaignResult, Grouping, aggregate, yoy_delta
from data_ingest import TIME_FORMAT
from exceptions import ContractError
from lp_core import CertificateReport, LpSolution
from market_model import HorizonProblem, RevenueReport, Schedule
from utils.formatting import format_money, format_percent
from utils.table import Table

logger = logging.getLogger(__name__)

SCHEDULE_COLUMNS = [
    "time",
    "lmp",
    "rcp",
    "qr",
    "qd",
    "qreg",
    "soc_start",
    "soc_end",
    "cashflow",
]
FLOAT_FORMAT = "%.12g"


def schedule_frame(
    hp: HorizonProblem, schedule: Schedule, report: RevenueReport
) -> pd.DataFrame:
    rcp = hp.prices.rcp if hp.prices.rcp is not None else np.full(hp.steps, np.nan)
    return pd.DataFrame(
        {
            "time": schedule.timestamps,
            "lmp": hp.prices.lmp,
            "rcp": rcp,
            "qr": schedule.charge_qr,
            "qd": schedule.discharge_qd,
            "qreg": schedule.reg_bid_qreg,
            "soc_start": schedule.soc_s[:-1],
            "soc_end": schedule.soc_s[1:],
            "cashflow": report.per_step_cashflow,
        },
        columns=SCHEDULE_COLUMNS,
    )


def write_schedule(
    path: Path, hp: HorizonProblem, schedule: Schedule, report: RevenueReport
) -> None:
    frame = schedule_frame(hp, schedule, report)
    frame.to_csv(path, index=False, date_format=TIME_FORMAT, float_format=FLOAT_FORMAT)


def load_schedule(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if missing := [c for c in SCHEDULE_COLUMNS if c not in frame.columns]:
        raise ContractError(f"{path} is not a schedule file, missing {missing}", module="cli")
    frame["time"] = pd.to_datetime(frame["time"], format=TIME_FORMAT)
    return frame


def revenue_summary(
    hp: HorizonProblem,
    solution: LpSolution,
    schedule: Optional[Schedule] = None,
    report: Optional[RevenueReport] = None,
    certificate: Optional[CertificateReport] = None,
) -> dict[str, Any]:
    summary: dict[str, Any] = {
        "status": solution.status.value,
        "device": hp.device.to_json(),
        "mode": hp.mode.value,
        "terminal_policy": hp.terminal_policy.value,
        "location": hp.prices.location,
        "start": hp.prices.timestamps[0].strftime(TIME_FORMAT),
        "steps": hp.steps,
        "dt_hours": hp.dt_hours,
        "discount_rate_R": hp.discount_rate_R,
        "iterations": solution.iterations,
    }
    if report is not None and schedule is not None:
        summary.update(
            {
                "r_arb": report.r_arb,
                "r_reg": report.r_reg,
                "total": report.total_discounted,
                "objective": solution.objective_value,
                "terminal_soc": schedule.terminal_soc,
                "simultaneous_steps": schedule.simultaneous_steps,
            }
        )
    if certificate is not None:
        summary["certificate"] = {
            "passed": certificate.passed,
            "primal_violation": certificate.primal_violation,
            "dual_violation": certificate.dual_violation,
            "complementarity": certificate.complementarity,
            "duality_gap": certificate.duality_gap,
        }
    return summary


def write_json(path: Path, data: dict[str, Any]) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_json(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def yoy_table(
    result: CampaignResult, value: str = "total", pool_locations: bool = True
) -> pd.DataFrame:
    """Every later year against the first year with solved days."""
    annual = aggregate(result, Grouping.ANNUAL, value=value, pool_locations=pool_locations)
    years = sorted(int(year) for year in annual["period"].unique())

    tables = []
    for year_b in years[1:]:
        table = yoy_delta(result, years[0], year_b, value, pool_locations=pool_locations)
        tables.append(table.assign(year_a=years[0], year_b=year_b))

    columns = ["device", "location", "mode", "year_a", "year_b", "rev_a", "rev_b", "delta_pct"]
    if not tables:
        return pd.DataFrame(columns=columns)
    return pd.concat(tables, ignore_index=True)[columns]


def campaign_tables(result: CampaignResult, value: str = "total") -> dict[str, pd.DataFrame]:
    return {
        "annual": aggregate(result, Grouping.ANNUAL, value=value, pool_locations=True),
        "monthly": aggregate(result, Grouping.MONTHLY, value=value, pool_locations=True),
        "locations_annual": aggregate(result, Grouping.ANNUAL, value=value),
        "yoy": yoy_table(result, value),
    }


def write_tables(tables: dict[str, pd.DataFrame], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, table in tables.items():
        path = out_dir / f"{name}.csv"
        table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        paths.append(path)
    return paths


TABLE_TITLES = {
    "annual": "Average daily revenue per year",
    "monthly": "Average daily revenue per month",
    "locations_annual": "Average daily revenue per year and location",
    "yoy": "Revenue change against the first year",
}


def format_tables(tables: dict[str, pd.DataFrame], page: int = 1) -> str:
    formatters = {
        "revenue": format_money,
        "rev_a": format_money,
        "rev_b": format_money,
        "delta_pct": format_percent,
    }
    return "\n\n".join(
        Table(table, TABLE_TITLES.get(name, name), page, formatters).build()
        for name, table in tables.items()
    )
