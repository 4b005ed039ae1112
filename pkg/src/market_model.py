"""Storage market models: arbitrage only, and arbitrage plus frequency
regulation. Builds the linear programs, maps solutions back to schedules and
settles the resulting cash flows."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd

from data_ingest import PriceSeries
from device import DeviceSpec, validate
from exceptions import (
    ConsistencyError,
    ConstructionError,
    CertificateError,
    ContractError,
    InfeasibleScheduleError,
)
from lp_core import (
    CertificateReport,
    LpProblem,
    LpSolution,
    LpStatus,
    solve,
    verify_certificate,
)

logger = logging.getLogger(__name__)

SCHEDULE_TOL = 1e-9

# defaults, the market operator's deployment series are not published
DEFAULT_DELTA_RU = 0.1
DEFAULT_DELTA_RD = 0.1
DEFAULT_GAMMA = 0.95
DEFAULT_PENALTY_FACTOR = 1.1


class Mode(str, Enum):
    ARBITRAGE = "arbitrage"
    JOINT = "joint"


class TerminalPolicy(str, Enum):
    FREE = "free"
    RETURN_TO_START = "return-to-start"


@dataclass
class RegulationParams:
    delta_ru: np.ndarray
    delta_rd: np.ndarray
    gamma: np.ndarray
    penalty_factor: float = DEFAULT_PENALTY_FACTOR
    # carried for completeness, no term of the objective uses it
    mileage_beta: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.delta_ru = np.asarray(self.delta_ru, dtype=float).reshape(-1)
        self.delta_rd = np.asarray(self.delta_rd, dtype=float).reshape(-1)
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        if self.mileage_beta is not None:
            self.mileage_beta = np.asarray(self.mileage_beta, dtype=float).reshape(-1)

    @classmethod
    def constant(
        cls,
        steps: int,
        delta_ru: float = DEFAULT_DELTA_RU,
        delta_rd: float = DEFAULT_DELTA_RD,
        gamma: float = DEFAULT_GAMMA,
        penalty_factor: float = DEFAULT_PENALTY_FACTOR,
    ) -> RegulationParams:
        return cls(
            np.full(steps, delta_ru),
            np.full(steps, delta_rd),
            np.full(steps, gamma),
            penalty_factor,
        )

    def __len__(self) -> int:
        return int(self.delta_ru.size)

    def head(self, steps: int) -> RegulationParams:
        return replace(
            self,
            delta_ru=self.delta_ru[:steps],
            delta_rd=self.delta_rd[:steps],
            gamma=self.gamma[:steps],
            mileage_beta=None if self.mileage_beta is None else self.mileage_beta[:steps],
        )

    def problems(self, steps: int) -> list[str]:
        errors = []
        vectors = {
            "delta_ru": self.delta_ru,
            "delta_rd": self.delta_rd,
            "gamma": self.gamma,
        }
        if self.mileage_beta is not None:
            vectors["mileage_beta"] = self.mileage_beta
        for name, values in vectors.items():
            if values.size != steps:
                errors.append(f"{name} has {values.size} steps, horizon has {steps}")
            elif not np.isfinite(values).all():
                errors.append(f"{name} contains non-finite values")
            elif name != "mileage_beta" and ((values < 0) | (values > 1)).any():
                errors.append(f"{name} must lie in [0, 1]")
        if not (np.isfinite(self.penalty_factor) and self.penalty_factor >= 0):
            errors.append(f"penalty factor must be non-negative: {self.penalty_factor}")
        return errors


@dataclass
class HorizonProblem:
    device: DeviceSpec
    prices: PriceSeries
    reg: Optional[RegulationParams] = None
    dt_hours: float = 1.0
    discount_rate_R: float = 0.0
    mode: Mode = Mode.ARBITRAGE
    terminal_policy: TerminalPolicy = TerminalPolicy.FREE

    @property
    def steps(self) -> int:
        return len(self.prices)

    @property
    def joint(self) -> bool:
        return self.mode == Mode.JOINT

    @property
    def power_cap(self) -> float:
        return self.device.power_rating_Q * self.dt_hours

    def discount_factors(self) -> np.ndarray:
        # first interval undiscounted
        return np.exp(-self.discount_rate_R * np.arange(self.steps))

    def check(self) -> None:
        errors = []
        if self.steps < 1:
            errors.append("horizon must have at least one step")
        if not (self.dt_hours > 0):
            errors.append(f"step length must be positive: {self.dt_hours}")
        elif abs(self.prices.step_hours - self.dt_hours) > 1e-9 and self.steps > 1:
            errors.append(
                f"price step {self.prices.step_hours} h does not match the model "
                f"step {self.dt_hours} h"
            )
        if not self.prices.is_regular:
            errors.append("price series has gaps, resample it first")
        if not (self.discount_rate_R >= 0):
            errors.append(f"discount rate must be non-negative: {self.discount_rate_R}")

        errors.extend(validate(self.device).errors)

        if self.joint:
            if self.prices.rcp is None:
                errors.append("regulation capacity price required")
            if self.reg is None:
                errors.append("regulation parameters required")
            else:
                errors.extend(self.reg.problems(self.steps))

        if errors:
            raise ConstructionError("; ".join(errors))

    def head(self, steps: int) -> HorizonProblem:
        mask = np.zeros(self.steps, dtype=bool)
        mask[:steps] = True
        return replace(
            self,
            prices=self.prices.select(mask),
            reg=None if self.reg is None else self.reg.head(steps),
        )


@dataclass
class Schedule:
    charge_qr: np.ndarray
    discharge_qd: np.ndarray
    reg_bid_qreg: np.ndarray
    soc_s: np.ndarray
    timestamps: pd.DatetimeIndex = field(repr=False)
    simultaneous_steps: list[int] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return int(self.charge_qr.size)

    @property
    def terminal_soc(self) -> float:
        return float(self.soc_s[-1])

    def head(self, steps: int) -> Schedule:
        return replace(
            self,
            charge_qr=self.charge_qr[:steps],
            discharge_qd=self.discharge_qd[:steps],
            reg_bid_qreg=self.reg_bid_qreg[:steps],
            soc_s=self.soc_s[: steps + 1],
            timestamps=self.timestamps[:steps],
            simultaneous_steps=[t for t in self.simultaneous_steps if t < steps],
        )


@dataclass
class RevenueReport:
    r_arb: float
    r_reg: float
    total_discounted: float
    per_step_cashflow: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class _Layout:
    steps: int
    joint: bool

    def qr(self, t: int) -> int:
        return t

    def qd(self, t: int) -> int:
        return self.steps + t

    def qreg(self, t: int) -> int:
        return 2 * self.steps + t

    def s(self, t: int) -> int:
        """Column of s_t for t = 1..T; s_0 is data."""
        return (3 if self.joint else 2) * self.steps + t - 1

    @property
    def num_cols(self) -> int:
        return (4 if self.joint else 3) * self.steps

    def col_names(self) -> list[str]:
        blocks = ["qr", "qd"] + (["qreg"] if self.joint else [])
        names = [f"{b}[{t}]" for b in blocks for t in range(self.steps)]
        return names + [f"s[{t}]" for t in range(1, self.steps + 1)]


def _build(hp: HorizonProblem) -> LpProblem:
    hp.check()

    T = hp.steps
    layout = _Layout(T, hp.joint)
    device = hp.device
    eta_s, eta_c = device.eta_s, device.eta_c
    s0 = device.initial_soc_s0
    return_to_start = hp.terminal_policy == TerminalPolicy.RETURN_TO_START

    num_rows = 2 * T + (1 if return_to_start else 0)
    a = np.zeros((num_rows, layout.num_cols))
    row_lower = np.zeros(num_rows)
    row_upper = np.zeros(num_rows)
    row_names = []

    if hp.joint:
        assert hp.reg is not None
        # net SoC effect of one unit of regulation bid
        reg_soc = eta_c * hp.reg.delta_rd - hp.reg.delta_ru

    for t in range(T):
        a[t, layout.s(t + 1)] = 1.0
        if t > 0:
            a[t, layout.s(t)] = -eta_s
        a[t, layout.qr(t)] = -eta_c
        a[t, layout.qd(t)] = 1.0
        if hp.joint:
            a[t, layout.qreg(t)] = -reg_soc[t]
        rhs = eta_s * s0 if t == 0 else 0.0
        row_lower[t] = row_upper[t] = rhs
        row_names.append(f"soc[{t}]")

    cap = hp.power_cap
    for t in range(T):
        row = T + t
        a[row, layout.qr(t)] = 1.0
        a[row, layout.qd(t)] = 1.0
        if hp.joint:
            a[row, layout.qreg(t)] = 1.0
        row_lower[row] = -np.inf
        row_upper[row] = cap
        row_names.append(f"power[{t}]")

    if return_to_start:
        a[2 * T, layout.s(T)] = 1.0
        row_lower[2 * T] = s0
        row_upper[2 * T] = np.inf
        row_names.append("terminal")

    discount = hp.discount_factors()
    lmp = hp.prices.lmp
    c = np.zeros(layout.num_cols)
    c[[layout.qd(t) for t in range(T)]] = lmp * discount
    c[[layout.qr(t) for t in range(T)]] = -lmp * discount
    if hp.joint:
        assert hp.reg is not None and hp.prices.rcp is not None
        reg = hp.reg
        energy = lmp * (reg.delta_ru - reg.delta_rd)
        capacity = hp.prices.rcp * (1.0 - reg.penalty_factor * (1.0 - reg.gamma))
        c[[layout.qreg(t) for t in range(T)]] = (energy + capacity) * discount

    var_lower = np.zeros(layout.num_cols)
    var_upper = np.full(layout.num_cols, cap)
    var_upper[[layout.s(t) for t in range(1, T + 1)]] = device.energy_capacity_S

    return LpProblem(
        objective_coeffs=c,
        constraint_matrix=a,
        row_upper_bounds=row_upper,
        row_lower_bounds=row_lower,
        var_lower_bounds=var_lower,
        var_upper_bounds=var_upper,
        row_names=row_names,
        col_names=layout.col_names(),
    )


def build_arbitrage(hp: HorizonProblem) -> LpProblem:
    if hp.mode != Mode.ARBITRAGE:
        raise ConstructionError(f"arbitrage model needs mode arbitrage, got {hp.mode.value}")
    return _build(hp)


def build_joint(hp: HorizonProblem) -> LpProblem:
    if hp.mode != Mode.JOINT:
        raise ConstructionError(f"joint model needs mode joint, got {hp.mode.value}")
    return _build(hp)


def build(hp: HorizonProblem) -> LpProblem:
    return build_joint(hp) if hp.joint else build_arbitrage(hp)


def schedule_violations(
    hp: HorizonProblem, sched: Schedule, tol: float = SCHEDULE_TOL
) -> list[str]:
    T = hp.steps
    violations = []

    for name in ("charge_qr", "discharge_qd", "reg_bid_qreg"):
        values = getattr(sched, name)
        if values.size != T:
            violations.append(f"{name} has {values.size} steps, horizon has {T}")
    if sched.soc_s.size != T + 1:
        violations.append(f"soc_s has {sched.soc_s.size} entries, expected {T + 1}")
    if violations:
        return violations

    qr, qd, qreg, soc = (
        sched.charge_qr,
        sched.discharge_qd,
        sched.reg_bid_qreg,
        sched.soc_s,
    )
    device = hp.device

    for name, values in (("q^r", qr), ("q^d", qd), ("q^reg", qreg)):
        if (values < -tol).any():
            violations.append(f"negative {name} at step(s) {np.flatnonzero(values < -tol).tolist()}")
    if not hp.joint and (np.abs(qreg) > tol).any():
        violations.append("regulation bid in arbitrage mode")

    if abs(soc[0] - device.initial_soc_s0) > tol:
        violations.append(f"initial SoC {soc[0]} differs from {device.initial_soc_s0}")
    low = np.flatnonzero(soc < -tol)
    high = np.flatnonzero(soc > device.energy_capacity_S + tol)
    if low.size:
        violations.append(f"SoC below zero at boundary(ies) {low.tolist()}")
    if high.size:
        violations.append(f"SoC above capacity at boundary(ies) {high.tolist()}")

    over = np.flatnonzero(qr + qd + qreg > hp.power_cap + tol)
    if over.size:
        violations.append(f"power cap exceeded at step(s) {over.tolist()}")

    expected = device.eta_s * soc[:-1] + device.eta_c * qr - qd
    if hp.joint:
        assert hp.reg is not None
        expected = expected + (device.eta_c * hp.reg.delta_rd - hp.reg.delta_ru) * qreg
    residual = np.abs(soc[1:] - expected)
    broken = np.flatnonzero(residual > tol)
    if broken.size:
        violations.append(
            f"SoC recursion off by {residual.max():.3g} at step(s) {broken.tolist()}"
        )

    if hp.terminal_policy == TerminalPolicy.RETURN_TO_START and (
        soc[-1] < device.initial_soc_s0 - tol
    ):
        violations.append("terminal SoC below the initial SoC")

    return violations


def _snap(values: np.ndarray, upper: float) -> np.ndarray:
    values = values.copy()
    values[(values < 0) & (values > -SCHEDULE_TOL)] = 0.0
    values[(values > upper) & (values < upper + SCHEDULE_TOL)] = upper
    return values


def extract_schedule(hp: HorizonProblem, sol: LpSolution) -> Schedule:
    if sol.status != LpStatus.OPTIMAL:
        raise ContractError(
            f"cannot extract a schedule from a {sol.status.value} solve",
            module="market_model",
        )

    T = hp.steps
    layout = _Layout(T, hp.joint)
    x = np.asarray(sol.primal_values, dtype=float)
    if x.size != layout.num_cols:
        raise ContractError(
            f"solution has {x.size} values, the {hp.mode.value} model has "
            f"{layout.num_cols}",
            module="market_model",
        )

    cap = hp.power_cap
    qr = _snap(x[layout.qr(0) : layout.qr(0) + T], cap)
    qd = _snap(x[layout.qd(0) : layout.qd(0) + T], cap)
    if hp.joint:
        qreg = _snap(x[layout.qreg(0) : layout.qreg(0) + T], cap)
    else:
        qreg = np.zeros(T)
    soc = np.concatenate(
        [
            [hp.device.initial_soc_s0],
            _snap(x[layout.s(1) : layout.s(1) + T], hp.device.energy_capacity_S),
        ]
    )

    simultaneous = np.flatnonzero((qr > SCHEDULE_TOL) & (qd > SCHEDULE_TOL)).tolist()
    if simultaneous:
        logger.debug("Simultaneous charge and discharge at step(s) %s", simultaneous)

    sched = Schedule(qr, qd, qreg, soc, hp.prices.timestamps, simultaneous)

    if violations := schedule_violations(hp, sched):
        raise ConsistencyError("extracted schedule is inconsistent: " + "; ".join(violations))

    return sched


def settle(hp: HorizonProblem, sched: Schedule) -> RevenueReport:
    if violations := schedule_violations(hp, sched):
        raise InfeasibleScheduleError(violations)

    lmp = hp.prices.lmp
    net_energy = sched.discharge_qd - sched.charge_qr
    regulation = np.zeros(hp.steps)

    if hp.joint:
        assert hp.reg is not None and hp.prices.rcp is not None
        reg = hp.reg
        net_energy = net_energy + (reg.delta_ru - reg.delta_rd) * sched.reg_bid_qreg
        regulation = (
            hp.prices.rcp
            * sched.reg_bid_qreg
            * (1.0 - reg.penalty_factor * (1.0 - reg.gamma))
        )

    arbitrage = lmp * net_energy
    cashflow = arbitrage + regulation

    return RevenueReport(
        r_arb=float(arbitrage.sum()),
        r_reg=float(regulation.sum()),
        total_discounted=float(cashflow @ hp.discount_factors()),
        per_step_cashflow=cashflow,
    )


@dataclass
class HorizonOutcome:
    problem: LpProblem = field(repr=False)
    solution: LpSolution = field(repr=False)
    schedule: Optional[Schedule] = field(default=None, repr=False)
    report: Optional[RevenueReport] = None
    certificate: Optional[CertificateReport] = field(default=None, repr=False)

    @property
    def status(self) -> LpStatus:
        return self.solution.status


def optimize(hp: HorizonProblem) -> HorizonOutcome:
    """Build, solve and settle one horizon. An optimal solve must also pass
    its optimality certificate, otherwise CertificateError is raised."""
    problem = build(hp)
    solution = solve(problem)
    outcome = HorizonOutcome(problem, solution)

    if solution.optimal:
        outcome.certificate = verify_certificate(problem, solution)
        if not outcome.certificate.passed:
            raise CertificateError(outcome.certificate.details)
        outcome.schedule = extract_schedule(hp, solution)
        outcome.report = settle(hp, outcome.schedule)
    else:
        logger.warning(
            "%s %s horizon starting %s is %s",
            hp.device.name,
            hp.mode.value,
            hp.prices.timestamps[0],
            solution.status.value,
        )

    return outcome
