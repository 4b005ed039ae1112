"""Price time series: CSV ingestion, resampling onto the model step and
reproducible synthetic scenarios."""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from exceptions import (
    AlignmentError,
    ContractError,
    GapError,
    ParseError,
    SchemaError,
    ValidationError,
)
from settings import get_settings

logger = logging.getLogger(__name__)

MAX_GAP_STEPS = 3
CANONICAL_COLUMNS = ["time", "location", "lmp", "rcp", "rmp"]
TIME_FORMAT = "%Y-%m-%dT%H:%M:%S"
OFFSET_RE = re.compile(r"(?:Z|[+-]\d{2}:?\d{2})$")
EPOCH_RE = r"-?\d+(?:\.\d+)?"


def _as_optional_vector(values: Optional[Iterable[float]]) -> np.ndarray | None:
    if values is None:
        return None
    return np.asarray(values, dtype=float)


@dataclass
class PriceSeries:
    location: str
    timestamps: pd.DatetimeIndex = field(repr=False)
    lmp: np.ndarray = field(repr=False)
    rcp: np.ndarray | None = field(default=None, repr=False)
    rmp: np.ndarray | None = field(default=None, repr=False)
    provenance: str = ""
    step: pd.Timedelta | None = None

    def __post_init__(self) -> None:
        self.timestamps = pd.DatetimeIndex(self.timestamps)
        self.lmp = np.asarray(self.lmp, dtype=float)
        self.rcp = _as_optional_vector(self.rcp)
        self.rmp = _as_optional_vector(self.rmp)

        n = len(self.timestamps)
        if n == 0:
            raise ContractError(
                f"price series for {self.location} is empty",
                module="data_ingest",
            )
        if self.timestamps.tz is not None:
            raise ContractError(
                "price timestamps must be market-local (naive)",
                module="data_ingest",
            )
        for name in ("lmp", "rcp", "rmp"):
            values = getattr(self, name)
            if values is None:
                continue
            if values.shape != (n,):
                raise ContractError(
                    f"{name} has {values.size} values for {n} timestamps",
                    module="data_ingest",
                )
            if not np.isfinite(values).all():
                raise ContractError(f"{name} contains non-finite values", module="data_ingest")

        diffs = np.diff(self.timestamps.asi8)
        if (diffs <= 0).any():
            raise ContractError("timestamps must be strictly increasing", module="data_ingest")

        if self.step is None:
            self.step = (
                pd.Timedelta(int(diffs.min()), "ns") if diffs.size else pd.Timedelta(hours=1)
            )
        self.step = pd.Timedelta(self.step)
        if diffs.size and (diffs % self.step.value).any():
            raise AlignmentError(
                f"mixed intervals in {self.location} prices (smallest spacing "
                f"{self.step}); resample the series onto a common step"
            )

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def step_hours(self) -> float:
        assert self.step is not None
        return self.step / pd.Timedelta(hours=1)

    @property
    def is_regular(self) -> bool:
        if len(self) < 2:
            return True
        return bool((np.diff(self.timestamps.asi8) == self.step.value).all())

    @property
    def has_rcp(self) -> bool:
        return self.rcp is not None

    def select(self, mask: np.ndarray) -> PriceSeries:
        return replace(
            self,
            timestamps=self.timestamps[mask],
            lmp=self.lmp[mask],
            rcp=None if self.rcp is None else self.rcp[mask],
            rmp=None if self.rmp is None else self.rmp[mask],
        )

    def window(self, start: datetime, periods: int) -> PriceSeries | None:
        """``periods`` consecutive steps starting exactly at ``start``, or None
        when the series does not cover them."""
        pos = self.timestamps.searchsorted(pd.Timestamp(start))
        if pos >= len(self) or self.timestamps[pos] != pd.Timestamp(start):
            return None
        if pos + periods > len(self):
            return None
        expected = pd.Timestamp(start) + self.step * (periods - 1)
        if self.timestamps[pos + periods - 1] != expected:
            return None
        mask = np.zeros(len(self), dtype=bool)
        mask[pos : pos + periods] = True
        return self.select(mask)

    def between(self, start: datetime, end: datetime) -> PriceSeries:
        mask = (self.timestamps >= pd.Timestamp(start)) & (
            self.timestamps < pd.Timestamp(end)
        )
        if not mask.any():
            raise ContractError(
                f"no {self.location} prices between {start} and {end}",
                module="data_ingest",
            )
        return self.select(np.asarray(mask))

    def scaled(self, factor: float) -> PriceSeries:
        return replace(
            self,
            lmp=self.lmp * factor,
            rcp=None if self.rcp is None else self.rcp * factor,
            rmp=None if self.rmp is None else self.rmp * factor,
        )

    def to_frame(self) -> pd.DataFrame:
        n = len(self)
        empty = np.full(n, np.nan)
        return pd.DataFrame(
            {
                "time": self.timestamps,
                "location": [self.location] * n,
                "lmp": self.lmp,
                "rcp": self.rcp if self.rcp is not None else empty,
                "rmp": self.rmp if self.rmp is not None else empty,
            }
        )

    def equals(self, other: PriceSeries) -> bool:
        def same(a: np.ndarray | None, b: np.ndarray | None) -> bool:
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (
            self.location == other.location
            and self.timestamps.equals(other.timestamps)
            and same(self.lmp, other.lmp)
            and same(self.rcp, other.rcp)
            and same(self.rmp, other.rmp)
        )

    def fingerprint(self) -> str:
        data = self.to_frame().to_csv(index=False, date_format=TIME_FORMAT)
        return hashlib.sha256(data.encode()).hexdigest()


@dataclass
class PriceSchema:
    time: str = "time"
    location: str = "location"
    lmp: str = "lmp"
    rcp: Optional[str] = "rcp"
    rmp: Optional[str] = "rmp"
    delimiter: str = ","
    epoch_unit: Optional[str] = None
    provenance: str = ""

    @classmethod
    def from_json(cls, schema_json: dict) -> PriceSchema:
        allowed = set(cls.__dataclass_fields__)
        if unknown := set(schema_json) - allowed:
            raise ValidationError(f"unknown schema key(s): {sorted(unknown)}")
        return cls(**schema_json)

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def _first_bad_line(bad: pd.Series) -> int:
    # header is line 1
    return int(bad[bad].index[0]) + 2


def _parse_numeric(raw: pd.Series, column: str) -> np.ndarray:
    values = pd.to_numeric(raw.str.strip(), errors="coerce")
    bad = values.isna() | ~np.isfinite(values.fillna(0.0))
    if bad.any():
        line = _first_bad_line(bad)
        raise ParseError(line, f"invalid {column} value {raw.loc[line - 2]!r}")
    return values.to_numpy(dtype=float)


def _parse_times(raw: pd.Series, schema: PriceSchema, tz: str) -> pd.Series:
    text = raw.str.strip()

    if schema.epoch_unit or (len(text) and text.str.fullmatch(EPOCH_RE).all()):
        numbers = pd.to_numeric(text, errors="coerce")
        if numbers.isna().any():
            line = _first_bad_line(numbers.isna())
            raise ParseError(line, f"invalid epoch timestamp {raw.loc[line - 2]!r}")
        times = pd.to_datetime(numbers, unit=schema.epoch_unit or "s", utc=True)
        return times.dt.tz_convert(tz).dt.tz_localize(None)

    if text.str.contains(OFFSET_RE).any():
        times = pd.to_datetime(text, errors="coerce", utc=True)
        if times.isna().any():
            line = _first_bad_line(times.isna())
            raise ParseError(line, f"invalid timestamp {raw.loc[line - 2]!r}")
        return times.dt.tz_convert(tz).dt.tz_localize(None)

    times = pd.to_datetime(text, errors="coerce")
    if times.isna().any():
        line = _first_bad_line(times.isna())
        raise ParseError(line, f"invalid timestamp {raw.loc[line - 2]!r}")
    return times


def _read_raw(path: str | Path, schema: PriceSchema) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ContractError(f"price file not found: {path}", module="data_ingest")

    try:
        raw = pd.read_csv(
            path,
            sep=schema.delimiter,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise SchemaError(schema.time, f"{path} is empty")
    except pd.errors.ParserError as exc:
        raise ParseError(0, f"malformed CSV: {exc}")

    # blank lines stay out of the data but keep their place in the numbering
    raw = raw.fillna("")
    raw = raw[raw.apply(lambda col: col.str.strip()).ne("").any(axis=1)]
    raw.columns = [str(c).strip() for c in raw.columns]
    for column in (schema.time, schema.location, schema.lmp):
        if column not in raw.columns:
            raise SchemaError(column)
    return raw


def _optional_values(raw: pd.DataFrame, column: str | None) -> np.ndarray | None:
    if not column or column not in raw.columns:
        return None
    text = raw[column].str.strip()
    if (text == "").all():
        return None
    return _parse_numeric(raw[column], column)


def _build_frame(
    location: str, raw: pd.DataFrame, schema: PriceSchema, tz: str
) -> pd.DataFrame:
    frame = pd.DataFrame(
        {
            "time": _parse_times(raw[schema.time], schema, tz),
            "lmp": _parse_numeric(raw[schema.lmp], schema.lmp),
        },
        index=raw.index,
    )
    for name in ("rcp", "rmp"):
        values = _optional_values(raw, getattr(schema, name))
        if values is not None:
            frame[name] = values

    # repeated hours (daylight saving fall-back) collapse to their mean
    merged = frame.groupby("time", sort=True).mean()
    if len(merged) < len(frame):
        logger.debug(
            "%s: averaged %d duplicated timestamp(s)", location, len(frame) - len(merged)
        )
    merged.index = pd.DatetimeIndex(merged.index)
    return merged


def _series_from_frame(
    location: str,
    frame: pd.DataFrame,
    provenance: str,
    step: pd.Timedelta | None = None,
) -> PriceSeries:
    return PriceSeries(
        location=location,
        timestamps=pd.DatetimeIndex(frame.index),
        lmp=frame["lmp"].to_numpy(dtype=float),
        rcp=frame["rcp"].to_numpy(dtype=float) if "rcp" in frame else None,
        rmp=frame["rmp"].to_numpy(dtype=float) if "rmp" in frame else None,
        provenance=provenance,
        step=step,
    )


def load_price_store(
    path: str | Path,
    schema: PriceSchema | None = None,
    dt_hours: float | None = None,
) -> dict[str, PriceSeries]:
    """All locations in a price file. With ``dt_hours`` every series is
    resampled onto that step, which also reconciles mixed intervals."""
    schema = schema or PriceSchema()
    tz = get_settings().market_tz
    raw = _read_raw(path, schema)

    store = {}
    for location, rows in raw.groupby(raw[schema.location].str.strip(), sort=True):
        frame = _build_frame(location, rows, schema, tz)
        if dt_hours is None:
            store[location] = _series_from_frame(location, frame, schema.provenance)
        else:
            frame = _resample_frame(frame, _smallest_step(frame), dt_hours, location)
            store[location] = _series_from_frame(
                location, frame, schema.provenance, pd.Timedelta(hours=dt_hours)
            )

    logger.info(
        "Loaded %s: %s",
        path,
        ", ".join(f"{name} ({len(s)} steps)" for name, s in store.items()),
    )
    return store


def load_prices(
    path: str | Path,
    schema: PriceSchema | None = None,
    location: str | None = None,
    dt_hours: float | None = None,
) -> PriceSeries:
    store = load_price_store(path, schema, dt_hours)

    if location is None:
        if len(store) > 1:
            raise ContractError(
                f"{path} holds several locations ({', '.join(store)}); pick one",
                module="data_ingest",
            )
        return next(iter(store.values()))

    try:
        return store[location]
    except KeyError:
        raise ContractError(
            f"location {location!r} not found in {path}; available: "
            f"{', '.join(store)}",
            module="data_ingest",
        )


def write_prices(series: PriceSeries | Iterable[PriceSeries], path: str | Path) -> None:
    if isinstance(series, PriceSeries):
        series = [series]
    frame = pd.concat([s.to_frame() for s in series], ignore_index=True)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame[CANONICAL_COLUMNS].to_csv(path, index=False, date_format=TIME_FORMAT)


def _fill_gaps(frame: pd.DataFrame, location: str) -> pd.DataFrame:
    missing = frame["lmp"].isna().to_numpy()
    if not missing.any():
        return frame

    # runs of consecutive missing steps
    edges = np.diff(np.concatenate([[0], missing.astype(int), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    for start, end in zip(starts, ends):
        if end - start > MAX_GAP_STEPS:
            raise GapError(frame.index[start], frame.index[end - 1], int(end - start))

    logger.debug(
        "%s: interpolated %d missing step(s) in %d gap(s)",
        location,
        int(missing.sum()),
        len(starts),
    )
    return frame.interpolate(method="linear", limit_area="inside")


def _smallest_step(frame: pd.DataFrame) -> pd.Timedelta:
    diffs = np.diff(frame.index.asi8)
    if not diffs.size:
        return pd.Timedelta(hours=1)
    return pd.Timedelta(int(diffs.min()), "ns")


def _resample_frame(
    frame: pd.DataFrame, source: pd.Timedelta, dt_hours: float, location: str
) -> pd.DataFrame:
    if not dt_hours > 0:
        raise ContractError(f"step must be positive, got {dt_hours}", module="data_ingest")
    target = pd.Timedelta(hours=dt_hours)

    if source <= target:
        frame = frame.resample(target, origin="start_day").mean()
        return _fill_gaps(frame, location)

    ratio = source / target
    if abs(ratio - round(ratio)) > 1e-9:
        raise AlignmentError(f"cannot split {source} steps into {target} steps evenly")
    if (np.diff(frame.index.asi8) % source.value).any():
        raise AlignmentError(
            f"mixed intervals in {location} prices cannot be split into {target} steps"
        )

    grid = pd.date_range(frame.index[0], frame.index[-1], freq=source)
    frame = _fill_gaps(frame.reindex(grid), location)

    # coarse prices hold for every sub-step
    repeats = int(round(ratio))
    offsets = np.arange(repeats, dtype=np.int64) * target.value
    index = pd.DatetimeIndex((frame.index.asi8[:, None] + offsets[None, :]).ravel())
    return pd.DataFrame(
        np.repeat(frame.to_numpy(), repeats, axis=0),
        index=index,
        columns=frame.columns,
    )


def _to_frame_indexed(series: PriceSeries) -> pd.DataFrame:
    data = {"lmp": series.lmp}
    if series.rcp is not None:
        data["rcp"] = series.rcp
    if series.rmp is not None:
        data["rmp"] = series.rmp
    return pd.DataFrame(data, index=series.timestamps)


def resample(series: PriceSeries, dt_hours: float) -> PriceSeries:
    """Average finer data into ``dt_hours`` buckets (anchored at midnight), hold
    coarser data constant across sub-steps, and interpolate gaps of at most
    ``MAX_GAP_STEPS`` steps."""
    assert series.step is not None
    frame = _resample_frame(
        _to_frame_indexed(series), series.step, dt_hours, series.location
    )
    return _series_from_frame(
        series.location, frame, series.provenance, pd.Timedelta(hours=dt_hours)
    )


@dataclass
class Suppression:
    start: date
    end: date  # inclusive
    factor: float

    def covers(self, timestamps: pd.DatetimeIndex) -> np.ndarray:
        day = timestamps.normalize()
        return np.asarray(
            (day >= pd.Timestamp(self.start)) & (day <= pd.Timestamp(self.end))
        )


@dataclass
class SyntheticScenario:
    days: int = 365
    start: date = date(2019, 1, 1)
    base_price: float = 40.0
    amplitude: float = 15.0
    noise: float = 5.0
    suppressions: list[Suppression] = field(default_factory=list)
    rcp_ratio: float = 0.25
    rcp_noise: float = 1.0
    location: str = "N.Y.C."
    dt_hours: float = 1.0

    def check(self) -> None:
        if self.days < 1:
            raise ValidationError(f"days must be at least 1, got {self.days}")
        if self.noise < 0 or self.rcp_noise < 0:
            raise ValidationError("noise levels must be non-negative")
        if self.rcp_ratio < 0:
            raise ValidationError("regulation price ratio must be non-negative")
        steps = 24 / self.dt_hours if self.dt_hours > 0 else 0
        if self.dt_hours <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ValidationError(
                f"step of {self.dt_hours} h does not divide a 24 h day"
            )
        for suppression in self.suppressions:
            if not (0 < suppression.factor <= 1):
                raise ValidationError(
                    f"suppression factor must be in (0, 1], got {suppression.factor}"
                )
            if suppression.end < suppression.start:
                raise ValidationError("suppression window ends before it starts")


def gen_synthetic(config: SyntheticScenario, seed: int) -> PriceSeries:
    """Daily sinusoid around a base price with Gaussian noise; suppression
    windows scale both price streams by their factor."""
    config.check()

    steps_per_day = int(round(24 / config.dt_hours))
    periods = config.days * steps_per_day
    timestamps = pd.date_range(
        pd.Timestamp(config.start), periods=periods, freq=pd.Timedelta(hours=config.dt_hours)
    )
    hours = (timestamps - timestamps.normalize()) / pd.Timedelta(hours=1)

    rng = np.random.default_rng(seed)
    lmp = (
        config.base_price
        + config.amplitude * np.sin(2 * np.pi * np.asarray(hours) / 24)
        + config.noise * rng.standard_normal(periods)
    )
    rcp = config.rcp_ratio * np.abs(lmp) + config.rcp_noise * rng.standard_normal(
        periods
    )
    rcp = np.maximum(rcp, 0.0)

    for suppression in config.suppressions:
        mask = suppression.covers(timestamps)
        lmp[mask] *= suppression.factor
        rcp[mask] *= suppression.factor

    if (lmp < 0).all():
        logger.warning(
            "Synthetic scenario yields only negative prices (base %s, amplitude %s)",
            config.base_price,
            config.amplitude,
        )

    return PriceSeries(
        location=config.location,
        timestamps=timestamps,
        lmp=lmp,
        rcp=rcp,
        provenance=f"synthetic seed={seed}",
        step=pd.Timedelta(hours=config.dt_hours),
    )


REGULATION_COLUMNS = ["delta_ru", "delta_rd", "gamma"]


def load_regulation_overrides(path: str | Path) -> pd.DataFrame:
    """Per-timestamp regulation fractions and performance scores
    (``time, delta_ru, delta_rd, gamma[, beta]``), indexed by market-local time."""
    path = Path(path)
    if not path.is_file():
        raise ContractError(f"regulation override file not found: {path}", module="data_ingest")

    raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    raw.columns = [str(c).strip() for c in raw.columns]
    for column in ["time"] + REGULATION_COLUMNS:
        if column not in raw.columns:
            raise SchemaError(column)

    schema = PriceSchema()
    frame = pd.DataFrame(
        {
            column: _parse_numeric(raw[column], column)
            for column in REGULATION_COLUMNS + (["beta"] if "beta" in raw else [])
        },
        index=raw.index,
    )
    for column in REGULATION_COLUMNS:
        outside = (frame[column] < 0) | (frame[column] > 1)
        if outside.any():
            raise ParseError(
                _first_bad_line(outside), f"{column} must lie in [0, 1]"
            )

    frame.index = pd.DatetimeIndex(
        _parse_times(raw["time"], schema, get_settings().market_tz)
    )
    return frame.groupby(level=0).mean().sort_index()
