from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Any, Optional

from campaign import CampaignConfig, RegulationTemplate, SocPolicy
from data_ingest import PriceSchema, PriceSeries, load_price_store
from device import DeviceSpec
from exceptions import ValidationError
from market_model import Mode, TerminalPolicy
from utils.validation import valid_fraction
from validators import clean_date, clean_hours

logger = logging.getLogger(__name__)


def read_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        config_json = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}")
    if not isinstance(config_json, dict):
        raise ValidationError(f"{path} must hold a JSON object")
    return config_json


def _reject_unknown(config_json: dict, allowed: set[str], what: str) -> None:
    if unknown := set(config_json) - allowed:
        raise ValidationError(f"unknown {what} key(s): {sorted(unknown)}")


def _existing_path(value: Any, base_dir: Path, key: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ValidationError(f"{key} must be a file path")
    path = Path(value)
    if not path.is_absolute():
        path = base_dir / path
    if not path.is_file():
        raise ValidationError(f"{key}: file not found: {path}")
    return path


def _enum(enum_cls: Any, value: Any, key: str) -> Any:
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(member.value for member in enum_cls)
        raise ValidationError(f"{key} must be one of {choices}, got {value!r}")


def _hours(value: Any, key: str) -> float:
    try:
        return clean_hours(value)
    except (TypeError, ValueError):
        raise ValidationError(
            f'{key} must be a number of hours or a duration such as "15m", got {value!r}'
        )


def _number(value: Any, key: str, minimum: float = 0.0) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{key} must be a number, got {value!r}")
    if not number >= minimum:
        raise ValidationError(f"{key} must be at least {minimum:g}, got {number}")
    return number


def parse_regulation(regulation_json: dict) -> RegulationTemplate:
    if not isinstance(regulation_json, dict):
        raise ValidationError("regulation must be an object")
    _reject_unknown(regulation_json, set(RegulationTemplate.__dataclass_fields__), "regulation")

    values = {
        key: _number(value, f"regulation.{key}")
        for key, value in regulation_json.items()
    }
    for key in ("delta_ru", "delta_rd", "gamma"):
        if key in values and not valid_fraction(values[key]):
            raise ValidationError(f"regulation.{key} must lie in [0, 1]")
    return RegulationTemplate(**values)


def parse_schema(schema_json: Any) -> PriceSchema:
    if not isinstance(schema_json, dict):
        raise ValidationError("schema must be an object")
    return PriceSchema.from_json(schema_json)


@dataclass
class RunConfig:
    prices: Optional[Path] = None
    location: Optional[str] = None
    schema: PriceSchema = field(default_factory=PriceSchema)
    device: Optional[DeviceSpec] = None
    mode: Mode = Mode.ARBITRAGE
    dt_hours: Optional[float] = None
    discount_rate_R: float = 0.0
    terminal_policy: TerminalPolicy = TerminalPolicy.FREE
    regulation: RegulationTemplate = field(default_factory=RegulationTemplate)
    regulation_overrides: Optional[Path] = None
    start: Optional[date] = None
    hours: Optional[float] = None
    out_dir: Optional[Path] = None

    @classmethod
    def from_json(cls, config_json: dict, base_dir: Path = Path(".")) -> RunConfig:
        _reject_unknown(config_json, set(cls.__dataclass_fields__), "run config")
        config = cls()

        if "prices" in config_json:
            config.prices = _existing_path(config_json["prices"], base_dir, "prices")
        if "regulation_overrides" in config_json:
            config.regulation_overrides = _existing_path(
                config_json["regulation_overrides"], base_dir, "regulation_overrides"
            )
        if "location" in config_json:
            config.location = str(config_json["location"])
        if "schema" in config_json:
            config.schema = parse_schema(config_json["schema"])
        if "device" in config_json:
            config.device = DeviceSpec.from_json(config_json["device"])
        if "mode" in config_json:
            config.mode = _enum(Mode, config_json["mode"], "mode")
        if "dt_hours" in config_json:
            config.dt_hours = _hours(config_json["dt_hours"], "dt_hours")
        if "discount_rate_R" in config_json:
            config.discount_rate_R = _number(
                config_json["discount_rate_R"], "discount_rate_R"
            )
        if "terminal_policy" in config_json:
            config.terminal_policy = _enum(
                TerminalPolicy, config_json["terminal_policy"], "terminal_policy"
            )
        if "regulation" in config_json:
            config.regulation = parse_regulation(config_json["regulation"])
        if "start" in config_json:
            config.start = _date(config_json["start"], "start")
        if "hours" in config_json:
            config.hours = _hours(config_json["hours"], "hours")
        if "out_dir" in config_json:
            config.out_dir = base_dir / str(config_json["out_dir"])

        return config

    def to_json(self) -> dict[str, Any]:
        return {
            "prices": None if self.prices is None else str(self.prices),
            "location": self.location,
            "schema": self.schema.to_json(),
            "device": None if self.device is None else self.device.to_json(),
            "mode": self.mode.value,
            "dt_hours": self.dt_hours,
            "discount_rate_R": self.discount_rate_R,
            "terminal_policy": self.terminal_policy.value,
            "regulation": asdict(self.regulation),
            "regulation_overrides": (
                None if self.regulation_overrides is None else str(self.regulation_overrides)
            ),
            "start": None if self.start is None else self.start.isoformat(),
            "hours": self.hours,
        }


def _date(value: Any, key: str) -> date:
    try:
        return clean_date(str(value))
    except ValueError:
        raise ValidationError(f"{key} must be a date (YYYY-MM-DD), got {value!r}")


@dataclass
class CampaignDocument:
    """A campaign config file: the campaign itself plus where its price data
    lives and where results go."""

    start: date
    end: date
    devices: list[DeviceSpec]
    prices: dict[str, Path]
    locations: list[str] = field(default_factory=list)
    schema: PriceSchema = field(default_factory=PriceSchema)
    modes: list[Mode] = field(default_factory=lambda: [Mode.ARBITRAGE, Mode.JOINT])
    soc_policy: SocPolicy = SocPolicy.CARRY_OVER
    horizon_hours: float = 24.0
    dt_hours: float = 1.0
    discount_rate_R: float = 0.0
    terminal_policy: TerminalPolicy = TerminalPolicy.FREE
    regulation: RegulationTemplate = field(default_factory=RegulationTemplate)
    regulation_overrides: Optional[Path] = None
    out_dir: Optional[Path] = None
    workers: Optional[int] = None
    db: Optional[Path] = None

    REQUIRED = ("start", "end", "devices", "prices")

    @classmethod
    def from_json(cls, config_json: dict, base_dir: Path = Path(".")) -> CampaignDocument:
        _reject_unknown(config_json, set(cls.__dataclass_fields__), "campaign config")
        if missing := [key for key in cls.REQUIRED if key not in config_json]:
            raise ValidationError(f"campaign config is missing {missing}")

        devices_json = config_json["devices"]
        if not isinstance(devices_json, list):
            raise ValidationError("devices must be a list of presets or device objects")

        document = cls(
            start=_date(config_json["start"], "start"),
            end=_date(config_json["end"], "end"),
            devices=[DeviceSpec.from_json(device) for device in devices_json],
            prices=cls._parse_prices(config_json["prices"], base_dir),
        )

        if "locations" in config_json:
            locations = config_json["locations"]
            if not isinstance(locations, list):
                raise ValidationError("locations must be a list of labels")
            document.locations = [str(location) for location in locations]
        if "schema" in config_json:
            document.schema = parse_schema(config_json["schema"])
        if "modes" in config_json:
            modes = config_json["modes"]
            if not isinstance(modes, list):
                raise ValidationError("modes must be a list")
            document.modes = [_enum(Mode, mode, "modes") for mode in modes]
        if "soc_policy" in config_json:
            document.soc_policy = _enum(SocPolicy, config_json["soc_policy"], "soc_policy")
        if "horizon_hours" in config_json:
            document.horizon_hours = _hours(config_json["horizon_hours"], "horizon_hours")
        if "dt_hours" in config_json:
            document.dt_hours = _hours(config_json["dt_hours"], "dt_hours")
        if "discount_rate_R" in config_json:
            document.discount_rate_R = _number(
                config_json["discount_rate_R"], "discount_rate_R"
            )
        if "terminal_policy" in config_json:
            document.terminal_policy = _enum(
                TerminalPolicy, config_json["terminal_policy"], "terminal_policy"
            )
        if "regulation" in config_json:
            document.regulation = parse_regulation(config_json["regulation"])
        if "regulation_overrides" in config_json:
            document.regulation_overrides = _existing_path(
                config_json["regulation_overrides"], base_dir, "regulation_overrides"
            )
        if "out_dir" in config_json:
            document.out_dir = base_dir / str(config_json["out_dir"])
        if "workers" in config_json:
            document.workers = int(_number(config_json["workers"], "workers", 1))
        if "db" in config_json:
            document.db = base_dir / str(config_json["db"])

        return document

    @staticmethod
    def _parse_prices(prices_json: Any, base_dir: Path) -> dict[str, Path]:
        """Either one file holding every location (key ``"*"``) or a map from
        location label to file."""
        if isinstance(prices_json, str):
            return {"*": _existing_path(prices_json, base_dir, "prices")}
        if isinstance(prices_json, dict) and prices_json:
            return {
                str(location): _existing_path(path, base_dir, f"prices.{location}")
                for location, path in prices_json.items()
            }
        raise ValidationError("prices must be a file path or a map of location to file")

    def load_prices(self) -> dict[str, PriceSeries]:
        store: dict[str, PriceSeries] = {}
        for location, path in self.prices.items():
            loaded = load_price_store(path, self.schema)
            if location == "*":
                store.update(loaded)
            elif location in loaded:
                store[location] = loaded[location]
            elif len(loaded) == 1:
                # single-location file under a different label
                store[location] = replace(next(iter(loaded.values())), location=location)
            else:
                raise ValidationError(
                    f"{path} has no prices for {location!r}; it holds "
                    f"{', '.join(loaded)}"
                )

        if not self.locations:
            self.locations = sorted(store)
        return store

    def to_campaign_config(self, regulation_overrides: Any = None) -> CampaignConfig:
        return CampaignConfig(
            start=self.start,
            end=self.end,
            devices=list(self.devices),
            locations=list(self.locations),
            modes=list(self.modes),
            soc_policy=self.soc_policy,
            horizon_hours=self.horizon_hours,
            dt_hours=self.dt_hours,
            discount_rate_R=self.discount_rate_R,
            terminal_policy=self.terminal_policy,
            regulation=self.regulation,
            regulation_overrides=regulation_overrides,
        )

    def resolved(self) -> dict[str, Any]:
        resolved = self.to_campaign_config().to_json()
        resolved.update(
            {
                "prices": {location: str(path) for location, path in self.prices.items()},
                "schema": self.schema.to_json(),
                "regulation_overrides": (
                    None
                    if self.regulation_overrides is None
                    else str(self.regulation_overrides)
                ),
            }
        )
        return resolved
