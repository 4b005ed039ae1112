"""Repeated daily-horizon optimisations over date ranges, devices, locations
and modes, and the revenue tables built from them."""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta
from enum import Enum
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np
import pandas as pd

from data_ingest import PriceSeries, resample
from device import DeviceSpec
from exceptions import (
    ContractError,
    CoverageError,
    EssRevError,
    GapError,
    MissingYearError,
    ValidationError,
)
from market_model import (
    DEFAULT_DELTA_RD,
    DEFAULT_DELTA_RU,
    DEFAULT_GAMMA,
    DEFAULT_PENALTY_FACTOR,
    HorizonProblem,
    Mode,
    RegulationParams,
    TerminalPolicy,
    optimize,
    settle,
)
from settings import VERSION, get_settings

logger = logging.getLogger(__name__)

DAY_HOURS = 24.0
UNDEFINED = "undefined"
RECORD_COLUMNS = [
    "date",
    "device",
    "location",
    "mode",
    "status",
    "r_arb",
    "r_reg",
    "total",
    "initial_soc",
    "terminal_soc",
    "iterations",
]
VALUE_COLUMNS = ("total", "r_arb", "r_reg")
FLOAT_FORMAT = "%.12g"


class SocPolicy(str, Enum):
    CARRY_OVER = "carry-over"
    INDEPENDENT = "independent"


class Grouping(str, Enum):
    MONTHLY = "monthly"
    ANNUAL = "annual"


class Statistic(str, Enum):
    MEAN = "mean"
    SUM = "sum"


@dataclass(frozen=True)
class RegulationTemplate:
    delta_ru: float = DEFAULT_DELTA_RU
    delta_rd: float = DEFAULT_DELTA_RD
    gamma: float = DEFAULT_GAMMA
    penalty_factor: float = DEFAULT_PENALTY_FACTOR

    def params(
        self, timestamps: pd.DatetimeIndex, overrides: Optional[pd.DataFrame] = None
    ) -> RegulationParams:
        params = RegulationParams.constant(
            len(timestamps),
            self.delta_ru,
            self.delta_rd,
            self.gamma,
            self.penalty_factor,
        )
        if overrides is None:
            return params

        aligned = overrides.reindex(timestamps)
        for column in ("delta_ru", "delta_rd", "gamma"):
            values = aligned[column].to_numpy(dtype=float)
            covered = ~np.isnan(values)
            getattr(params, column)[covered] = values[covered]
        if "beta" in aligned:
            params.mileage_beta = aligned["beta"].to_numpy(dtype=float)
            params.mileage_beta[np.isnan(params.mileage_beta)] = 0.0
        return params


@dataclass
class CampaignConfig:
    start: date
    end: date  # inclusive
    devices: list[DeviceSpec]
    locations: list[str]
    modes: list[Mode]
    soc_policy: SocPolicy = SocPolicy.CARRY_OVER
    horizon_hours: float = DAY_HOURS
    dt_hours: float = 1.0
    discount_rate_R: float = 0.0
    terminal_policy: TerminalPolicy = TerminalPolicy.FREE
    regulation: RegulationTemplate = field(default_factory=RegulationTemplate)
    regulation_overrides: Optional[pd.DataFrame] = field(default=None, repr=False)

    @property
    def steps_per_day(self) -> int:
        return int(round(DAY_HOURS / self.dt_hours))

    @property
    def horizon_steps(self) -> int:
        return int(round(self.horizon_hours / self.dt_hours))

    def days(self) -> list[date]:
        return [
            self.start + timedelta(days=i) for i in range((self.end - self.start).days + 1)
        ]

    def check(self) -> None:
        if self.end < self.start:
            raise ValidationError(f"empty date range: {self.start} to {self.end}")
        if not self.devices:
            raise ValidationError("campaign needs at least one device")
        if not self.locations:
            raise ValidationError("campaign needs at least one location")
        if not self.modes:
            raise ValidationError("campaign needs at least one mode")

        names = [device.name for device in self.devices]
        if len(set(names)) != len(names):
            raise ValidationError(f"device names must be unique: {names}")
        if len(set(self.locations)) != len(self.locations):
            raise ValidationError(f"locations must be unique: {self.locations}")

        steps = DAY_HOURS / self.dt_hours if self.dt_hours > 0 else 0
        if self.dt_hours <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ValidationError(f"step of {self.dt_hours} h does not divide a day")
        if self.horizon_hours < DAY_HOURS:
            raise ValidationError(
                f"horizon must cover at least one day, got {self.horizon_hours} h"
            )
        if abs(self.horizon_hours / self.dt_hours - self.horizon_steps) > 1e-9:
            raise ValidationError(
                f"horizon of {self.horizon_hours} h is not a whole number of steps"
            )
        if self.discount_rate_R < 0:
            raise ValidationError(
                f"discount rate must be non-negative: {self.discount_rate_R}"
            )

    def to_json(self) -> dict[str, Any]:
        return {
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "devices": [device.to_json() for device in self.devices],
            "locations": list(self.locations),
            "modes": [mode.value for mode in self.modes],
            "soc_policy": self.soc_policy.value,
            "horizon_hours": self.horizon_hours,
            "dt_hours": self.dt_hours,
            "discount_rate_R": self.discount_rate_R,
            "terminal_policy": self.terminal_policy.value,
            "regulation": asdict(self.regulation),
        }


@dataclass
class CampaignRecord:
    date: date
    device: str
    location: str
    mode: str
    status: str
    r_arb: float
    r_reg: float
    total: float
    initial_soc: float
    terminal_soc: float
    iterations: int

    @property
    def key(self) -> tuple[date, str, str, str]:
        return self.date, self.device, self.location, self.mode

    @property
    def solved(self) -> bool:
        return self.status == "optimal"


@dataclass
class FailureRecord:
    date: date
    device: str
    location: str
    mode: str
    reason: str


@dataclass
class CampaignResult:
    records: list[CampaignRecord]
    failures: list[FailureRecord] = field(default_factory=list)
    config: Optional[CampaignConfig] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [asdict(record) for record in self.records], columns=RECORD_COLUMNS
        )
        frame["date"] = pd.to_datetime(frame["date"])
        return frame

    @cached_property
    def solved(self) -> pd.DataFrame:
        return self.frame[self.frame["status"] == "optimal"]


@dataclass
class _StreamTask:
    device: DeviceSpec
    location: str
    mode: Mode
    days: list[date]
    prices: PriceSeries = field(repr=False)
    config: CampaignConfig = field(repr=False)


def _day_start(day: date) -> pd.Timestamp:
    return pd.Timestamp(day)


def _horizon_prices(task: _StreamTask, day: date) -> PriceSeries | None:
    """Look-ahead window for ``day``; near the end of the data the window is
    shortened to the committed day."""
    config = task.config
    window = task.prices.window(_day_start(day), config.horizon_steps)
    if window is None and config.horizon_steps > config.steps_per_day:
        window = task.prices.window(_day_start(day), config.steps_per_day)
    return window


def _solve_day(
    task: _StreamTask, day: date, device: DeviceSpec
) -> tuple[CampaignRecord, Optional[str]]:
    config = task.config
    committed = config.steps_per_day
    base = CampaignRecord(
        date=day,
        device=device.name,
        location=task.location,
        mode=task.mode.value,
        status="error",
        r_arb=float("nan"),
        r_reg=float("nan"),
        total=float("nan"),
        initial_soc=device.initial_soc_s0,
        terminal_soc=float("nan"),
        iterations=0,
    )

    prices = _horizon_prices(task, day)
    if prices is None:
        return base, "no price data for the day"

    hp = HorizonProblem(
        device=device,
        prices=prices,
        reg=(
            config.regulation.params(prices.timestamps, config.regulation_overrides)
            if task.mode == Mode.JOINT
            else None
        ),
        dt_hours=config.dt_hours,
        discount_rate_R=config.discount_rate_R,
        mode=task.mode,
        terminal_policy=config.terminal_policy,
    )

    try:
        outcome = optimize(hp)
    except EssRevError as exc:
        return base, f"{exc.module}: {exc}"

    base.status = outcome.status.value
    base.iterations = outcome.solution.iterations
    if outcome.schedule is None:
        return base, f"solver status {outcome.status.value}"

    schedule, report = outcome.schedule, outcome.report
    if len(prices) > committed:
        committed_hp = replace(hp.head(committed), terminal_policy=TerminalPolicy.FREE)
        schedule = schedule.head(committed)
        report = settle(committed_hp, schedule)
    assert report is not None

    base.r_arb = report.r_arb
    base.r_reg = report.r_reg
    base.total = report.total_discounted
    base.terminal_soc = schedule.terminal_soc
    return base, None


def _run_stream(task: _StreamTask) -> tuple[list[CampaignRecord], list[FailureRecord]]:
    carry_over = task.config.soc_policy == SocPolicy.CARRY_OVER
    records, failures = [], []
    device = task.device

    for day in task.days:
        record, reason = _solve_day(task, day, device)
        records.append(record)

        if reason is not None:
            logger.warning(
                "%s %s %s on %s failed: %s",
                task.device.name,
                task.location,
                task.mode.value,
                day,
                reason,
            )
            failures.append(
                FailureRecord(day, record.device, record.location, record.mode, reason)
            )
            device = task.device
        elif carry_over:
            device = task.device.with_initial_soc(record.terminal_soc)

    return records, failures


def _prepare_prices(series: PriceSeries, dt_hours: float) -> PriceSeries:
    target = pd.Timedelta(hours=dt_hours)
    if series.step == target and series.is_regular:
        return series
    try:
        return resample(series, dt_hours)
    except GapError as exc:
        if series.step != target:
            raise
        # long gaps stay in place and show up as coverage gaps
        logger.debug("%s: %s", series.location, exc)
        return series


def check_coverage(
    config: CampaignConfig, prices: dict[str, PriceSeries]
) -> list[tuple[str, str]]:
    gaps = []
    for location in config.locations:
        series = prices.get(location)
        if series is None:
            gaps.append((location, "no price data"))
            continue
        for day in config.days():
            if series.window(_day_start(day), config.steps_per_day) is None:
                gaps.append((location, day.isoformat()))
    return gaps


def _tasks(config: CampaignConfig, prices: dict[str, PriceSeries]) -> list[_StreamTask]:
    days = config.days()
    end = _day_start(config.end) + pd.Timedelta(hours=config.horizon_hours)

    tasks = []
    for device, location, mode in product(config.devices, config.locations, config.modes):
        series = prices[location].between(_day_start(config.start), end)
        if config.soc_policy == SocPolicy.CARRY_OVER:
            tasks.append(_StreamTask(device, location, mode, days, series, config))
        else:
            tasks.extend(
                _StreamTask(device, location, mode, [day], series, config) for day in days
            )
    return tasks


def run(
    config: CampaignConfig,
    prices: dict[str, PriceSeries],
    workers: int | None = None,
) -> CampaignResult:
    """Solve every (date, device, location, mode) instance. Carry-over streams
    run sequentially inside one worker, streams and independent days are spread
    over ``workers`` processes."""
    config.check()
    prices = {
        location: _prepare_prices(prices[location], config.dt_hours)
        for location in config.locations
        if location in prices
    }

    if gaps := check_coverage(config, prices):
        raise CoverageError(gaps)

    tasks = _tasks(config, prices)
    workers = workers or get_settings().workers
    logger.info(
        "Running %d day(s) x %d device(s) x %d location(s) x %d mode(s) as %d "
        "task(s) on %d worker(s)",
        len(config.days()),
        len(config.devices),
        len(config.locations),
        len(config.modes),
        len(tasks),
        workers,
    )

    if workers == 1 or len(tasks) == 1:
        outputs = [_run_stream(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outputs = list(executor.map(_run_stream, tasks, chunksize=_chunksize(tasks, workers)))

    records = sorted(
        (record for chunk, _ in outputs for record in chunk), key=lambda r: r.key
    )
    failures = sorted(
        (failure for _, chunk in outputs for failure in chunk),
        key=lambda f: (f.date, f.device, f.location, f.mode),
    )

    logger.info(
        "Campaign finished: %d record(s), %d failed", len(records), len(failures)
    )
    return CampaignResult(records, failures, config)


def _chunksize(tasks: list[_StreamTask], workers: int) -> int:
    return max(1, len(tasks) // (workers * 4))


def _checked_value(value: str) -> str:
    if value not in VALUE_COLUMNS:
        raise ContractError(
            f"value must be one of {', '.join(VALUE_COLUMNS)}: {value}",
            module="campaign",
        )
    return value


def _period(dates: pd.Series, grouping: Grouping) -> pd.Series:
    if grouping == Grouping.MONTHLY:
        return dates.dt.strftime("%Y-%m")
    return dates.dt.strftime("%Y")


def aggregate(
    result: CampaignResult,
    grouping: Union[Grouping, str] = Grouping.ANNUAL,
    statistic: Union[Statistic, str] = Statistic.MEAN,
    value: str = "total",
    pool_locations: bool = False,
) -> pd.DataFrame:
    """Revenue per (device, location, mode, period) over solved days only.
    With ``pool_locations`` the per-location figures are averaged and reported
    under location ``"pooled"``."""
    grouping, statistic = Grouping(grouping), Statistic(statistic)
    value = _checked_value(value)
    if not len(result):
        raise ContractError("cannot aggregate an empty campaign result", module="campaign")

    solved = result.solved.assign(period=lambda f: _period(f["date"], grouping))
    keys = ["device", "location", "mode", "period"]
    table = (
        solved.groupby(keys, sort=True)[value]
        .agg([statistic.value, "count"])
        .rename(columns={statistic.value: "revenue", "count": "days"})
        .reset_index()
    )

    if pool_locations and not table.empty:
        table = (
            table.groupby(["device", "mode", "period"], sort=True)
            .agg(revenue=("revenue", "mean"), days=("days", "sum"))
            .reset_index()
            .assign(location="pooled")
        )

    return table[keys + ["revenue", "days"]].reset_index(drop=True)


def percent_change(rev_a: float, rev_b: float) -> float | str:
    if rev_a == 0:
        return UNDEFINED
    return 100.0 * (rev_b - rev_a) / rev_a


def yoy_delta(
    result: CampaignResult,
    year_a: int,
    year_b: int,
    value: str = "total",
    statistic: Union[Statistic, str] = Statistic.MEAN,
    pool_locations: bool = False,
) -> pd.DataFrame:
    annual = aggregate(result, Grouping.ANNUAL, statistic, value, pool_locations)
    years = set(annual["period"])
    for year in (year_a, year_b):
        if str(year) not in years:
            raise MissingYearError(f"year {year} has no solved days")

    keys = ["device", "location", "mode"]
    rev_a = annual[annual["period"] == str(year_a)].set_index(keys)["revenue"]
    rev_b = annual[annual["period"] == str(year_b)].set_index(keys)["revenue"]
    table = pd.concat([rev_a.rename("rev_a"), rev_b.rename("rev_b")], axis=1, join="inner")

    dropped = len(rev_a.index.union(rev_b.index)) - len(table)
    if dropped:
        logger.warning("%d group(s) are missing one of the years and are left out", dropped)

    table["delta_pct"] = [
        percent_change(a, b) for a, b in zip(table["rev_a"], table["rev_b"])
    ]
    return table.sort_index().reset_index()


def write_records(result: CampaignResult, path: str | Path) -> None:
    frame = result.frame.copy()
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def load_records(path: str | Path) -> CampaignResult:
    path = Path(path)
    if not path.is_file():
        raise ContractError(f"records file not found: {path}", module="campaign")
    frame = pd.read_csv(path, dtype={"device": str, "location": str, "mode": str})
    if missing := [c for c in RECORD_COLUMNS if c not in frame.columns]:
        raise ContractError(f"{path} is not a records file, missing {missing}", module="campaign")

    records = [
        CampaignRecord(
            date=date.fromisoformat(row.date),
            device=row.device,
            location=row.location,
            mode=row.mode,
            status=row.status,
            r_arb=float(row.r_arb),
            r_reg=float(row.r_reg),
            total=float(row.total),
            initial_soc=float(row.initial_soc),
            terminal_soc=float(row.terminal_soc),
            iterations=int(row.iterations),
        )
        for row in frame.itertuples(index=False)
    ]
    return CampaignResult(records)


def config_hash(resolved: dict[str, Any]) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_manifest(
    resolved: dict[str, Any],
    result: CampaignResult,
    prices: Iterable[PriceSeries],
) -> dict[str, Any]:
    return {
        "version": VERSION,
        "config": resolved,
        "config_hash": config_hash(resolved),
        "data": {
            series.location: {
                "fingerprint": series.fingerprint(),
                "provenance": series.provenance,
            }
            for series in sorted(prices, key=lambda s: s.location)
        },
        "records": len(result.records),
        "failures": [
            {**asdict(failure), "date": failure.date.isoformat()}
            for failure in result.failures
        ],
    }


def write_manifest(manifest: dict[str, Any], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ContractError(f"manifest not found: {path}", module="campaign")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path} is not valid JSON: {exc}", module="campaign")
