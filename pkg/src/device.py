from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

from exceptions import UnknownTechnologyError, ValidationError

logger = logging.getLogger(__name__)

MIN_MARKET_DURATION_HOURS = 4.0


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    eta_s: float
    eta_c: float
    energy_capacity_S: float
    power_rating_Q: float
    initial_soc_s0: float = 0.0

    @property
    def duration_hours(self) -> float:
        if self.power_rating_Q == 0:
            return math.inf
        return self.energy_capacity_S / self.power_rating_Q

    def with_initial_soc(self, soc: float) -> DeviceSpec:
        return replace(self, initial_soc_s0=soc)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, device_json: dict | str) -> DeviceSpec:
        if isinstance(device_json, str):
            return preset(device_json)

        fields = dict(device_json)
        base: DeviceSpec | None = None
        if "preset" in fields:
            base = preset(fields.pop("preset"))

        allowed = set(cls.__dataclass_fields__)
        if unknown := set(fields) - allowed:
            raise ValidationError(f"unknown device field(s): {sorted(unknown)}")

        if base is not None:
            return replace(base, **fields)

        missing = allowed - {"initial_soc_s0"} - set(fields)
        if missing:
            raise ValidationError(f"device is missing field(s): {sorted(missing)}")

        try:
            return cls(
                name=str(fields["name"]),
                eta_s=float(fields["eta_s"]),
                eta_c=float(fields["eta_c"]),
                energy_capacity_S=float(fields["energy_capacity_S"]),
                power_rating_Q=float(fields["power_rating_Q"]),
                initial_soc_s0=float(fields.get("initial_soc_s0", 0.0)),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"invalid device field value: {exc}")


# Reference technologies: no self-discharge, round-trip
# efficiency, energy capacity [MWh] and power rating [MW].
PRESETS: dict[str, DeviceSpec] = {
    "li-ion": DeviceSpec("li-ion", 1.00, 0.90, 24.0, 36.0),
    "adv-lead-acid": DeviceSpec("adv-lead-acid", 1.00, 0.95, 7.5, 10.0),
    "vanadium-redox": DeviceSpec("vanadium-redox", 1.00, 0.85, 60.0, 15.0),
    "lfp": DeviceSpec("lfp", 1.00, 0.93, 7.8, 19.8),
    "flywheel": DeviceSpec("flywheel", 1.00, 0.85, 5.0, 20.0),
}


def preset(technology: str) -> DeviceSpec:
    key = technology.strip().lower()
    try:
        return PRESETS[key]
    except KeyError:
        raise UnknownTechnologyError(
            f"unknown technology {technology!r}, valid names are: "
            f"{', '.join(PRESETS)}"
        )


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.errors


def validate(spec: DeviceSpec) -> ValidationReport:
    report = ValidationReport()

    values = {
        "eta_s": spec.eta_s,
        "eta_c": spec.eta_c,
        "energy_capacity_S": spec.energy_capacity_S,
        "power_rating_Q": spec.power_rating_Q,
        "initial_soc_s0": spec.initial_soc_s0,
    }
    for name, value in values.items():
        if not math.isfinite(value):
            report.errors.append(f"{name} must be finite")
    if report.errors:
        return report

    if not (0.0 <= spec.eta_s <= 1.0):
        report.errors.append(
            f"self-discharge efficiency out of range [0, 1]: {spec.eta_s}"
        )
    if not (0.0 < spec.eta_c <= 1.0):
        report.errors.append(f"round-trip efficiency out of range (0, 1]: {spec.eta_c}")
    if spec.energy_capacity_S < 0:
        report.errors.append(
            f"energy capacity must be non-negative: {spec.energy_capacity_S}"
        )
    if spec.power_rating_Q < 0:
        report.errors.append(f"power rating must be non-negative: {spec.power_rating_Q}")
    if spec.initial_soc_s0 < 0:
        report.errors.append(f"initial state is negative: {spec.initial_soc_s0}")
    elif spec.initial_soc_s0 > spec.energy_capacity_S:
        report.errors.append(
            f"initial state exceeds capacity: {spec.initial_soc_s0} > "
            f"{spec.energy_capacity_S}"
        )

    if report.valid and spec.duration_hours < MIN_MARKET_DURATION_HOURS:
        report.warnings.append(
            f"{spec.name}: discharge duration {spec.duration_hours:.2f} h is below "
            f"the {MIN_MARKET_DURATION_HOURS:g} h energy-market eligibility "
            f"threshold"
        )

    return report
