from datetime import datetime

import numpy as np
import pandas as pd
import pytest

from data_ingest import PriceSeries
from device import DeviceSpec
from exceptions import (
    CertificateError,
    ConstructionError,
    ContractError,
    InfeasibleScheduleError,
)
from lp_core import CertificateReport, LpSolution, LpStatus, solve, verify_certificate
from market_model import (
    HorizonProblem,
    Mode,
    RegulationParams,
    Schedule,
    TerminalPolicy,
    build,
    build_arbitrage,
    build_joint,
    extract_schedule,
    optimize,
    schedule_violations,
    settle,
)
from oracles import grid_search

START = datetime(2019, 6, 1)
UNIT = DeviceSpec("unit", eta_s=1.0, eta_c=1.0, energy_capacity_S=1.0, power_rating_Q=1.0)


def make_prices(lmp, rcp=None, dt_hours=1.0):
    timestamps = pd.date_range(START, periods=len(lmp), freq=pd.Timedelta(hours=dt_hours))
    return PriceSeries("N.Y.C.", timestamps, lmp, rcp, step=pd.Timedelta(hours=dt_hours))


def arbitrage_problem(lmp, device=UNIT, **kwargs):
    return HorizonProblem(device, make_prices(lmp), **kwargs)


def joint_problem(gamma, lmp=(0.0,), rcp=(10.0,), device=None, **kwargs):
    device = device or UNIT.with_initial_soc(0.5)
    return HorizonProblem(
        device,
        make_prices(list(lmp), list(rcp)),
        RegulationParams.constant(len(lmp), delta_ru=0.2, delta_rd=0.2, gamma=gamma),
        mode=Mode.JOINT,
        **kwargs,
    )


def random_horizon(rng, max_steps=12, mode=Mode.ARBITRAGE, steps=None):
    steps = steps or int(rng.integers(1, max_steps + 1))
    capacity = float(rng.uniform(0.5, 10))
    device = DeviceSpec(
        "random",
        eta_s=float(rng.uniform(0.9, 1.0)),
        eta_c=float(rng.uniform(0.7, 1.0)),
        energy_capacity_S=capacity,
        power_rating_Q=float(rng.uniform(0.5, 10)),
        initial_soc_s0=float(rng.uniform(0, capacity)),
    )
    prices = make_prices(rng.normal(30, 15, steps), rng.uniform(0, 10, steps))
    reg = RegulationParams(
        rng.uniform(0, 0.3, steps), rng.uniform(0, 0.3, steps), rng.uniform(0.5, 1, steps)
    )
    return HorizonProblem(
        device,
        prices,
        reg,
        discount_rate_R=float(rng.choice([0.0, 0.001, 0.05])),
        mode=mode,
    )


class TestArbitrage:
    def test_buy_low_sell_high(self):
        hp = arbitrage_problem([10.0, 20.0])

        outcome = optimize(hp)

        assert outcome.status == LpStatus.OPTIMAL
        assert outcome.solution.objective_value == pytest.approx(10.0, abs=1e-9)
        assert outcome.schedule.charge_qr == pytest.approx([1.0, 0.0], abs=1e-9)
        assert outcome.schedule.discharge_qd == pytest.approx([0.0, 1.0], abs=1e-9)
        assert grid_search(hp, steps=10) == pytest.approx(10.0)

    def test_flat_prices_with_losses_stay_idle(self):
        hp = arbitrage_problem([15.0, 15.0], device=DeviceSpec("lossy", 1.0, 0.9, 1.0, 1.0))

        outcome = optimize(hp)

        assert outcome.solution.objective_value == pytest.approx(0.0, abs=1e-9)
        assert grid_search(hp, steps=10) == pytest.approx(0.0)

    def test_single_lossy_cycle(self):
        hp = arbitrage_problem([10.0, 20.0], device=DeviceSpec("lossy", 1.0, 0.9, 1.0, 1.0))

        outcome = optimize(hp)

        # 0.9 * 20 - 10
        assert outcome.solution.objective_value == pytest.approx(8.0, abs=1e-9)
        assert grid_search(hp, steps=10) == pytest.approx(8.0)

    def test_certificate(self):
        hp = arbitrage_problem([31.0, 12.0, 44.0, 20.0, 50.0])
        problem = build(hp)

        assert verify_certificate(problem, solve(problem)).passed

    def test_optimize_certifies(self):
        outcome = optimize(arbitrage_problem([31.0, 12.0, 44.0]))

        assert outcome.certificate.passed

    def test_failed_certificate_is_refused(self, mocker):
        mocker.patch(
            "market_model.verify_certificate",
            return_value=CertificateReport(0.0, 0.0, 0.0, 1.0, False, ["duality gap 1"]),
        )

        with pytest.raises(CertificateError, match="duality gap") as exc_info:
            optimize(arbitrage_problem([10.0, 20.0]))

        assert exc_info.value.module == "lp_core"
        assert exc_info.value.exit_code == 2

    def test_return_to_start(self):
        hp = arbitrage_problem([30.0, 10.0], device=UNIT.with_initial_soc(1.0))
        free = optimize(hp)

        hp.terminal_policy = TerminalPolicy.RETURN_TO_START
        bound = optimize(hp)

        # free: sell the stored unit at 30 and stay empty
        assert free.solution.objective_value == pytest.approx(30.0, abs=1e-9)
        assert bound.schedule.terminal_soc >= 1.0 - 1e-9
        assert bound.solution.objective_value <= free.solution.objective_value + 1e-9
        assert bound.solution.objective_value == pytest.approx(grid_search(hp, steps=10))

    def test_discount_factors(self):
        hp = arbitrage_problem([1.0, 1.0, 1.0], discount_rate_R=0.1)

        assert hp.discount_factors() == pytest.approx([1.0, np.exp(-0.1), np.exp(-0.2)])

    def test_discounted_total_matches_objective(self):
        hp = arbitrage_problem([10.0, 20.0], discount_rate_R=0.05)

        outcome = optimize(hp)

        assert outcome.report.total_discounted == pytest.approx(
            outcome.solution.objective_value, abs=1e-9
        )
        # undiscounted arbitrage revenue is still the plain price spread
        assert outcome.report.r_arb == pytest.approx(10.0, abs=1e-9)


class TestJoint:
    def test_full_regulation_bid(self):
        hp = joint_problem(gamma=1.0)

        outcome = optimize(hp)

        assert outcome.solution.objective_value == pytest.approx(10.0, abs=1e-9)
        assert outcome.schedule.reg_bid_qreg == pytest.approx([1.0], abs=1e-9)
        assert grid_search(hp) == pytest.approx(10.0)

    def test_partial_performance(self):
        hp = joint_problem(gamma=0.5)

        outcome = optimize(hp)

        # 10 * (1 - 1.1 * 0.5)
        assert outcome.solution.objective_value == pytest.approx(4.5, abs=1e-9)
        assert grid_search(hp) == pytest.approx(4.5)

    def test_negative_capacity_value_means_no_bid(self):
        hp = joint_problem(gamma=0.0)

        outcome = optimize(hp)

        assert outcome.solution.objective_value == pytest.approx(0.0, abs=1e-9)
        assert outcome.schedule.reg_bid_qreg == pytest.approx([0.0], abs=1e-9)
        assert grid_search(hp) == pytest.approx(0.0)

    def test_settlement_splits_revenue(self):
        outcome = optimize(joint_problem(gamma=0.5))

        assert outcome.report.r_arb == pytest.approx(0.0, abs=1e-9)
        assert outcome.report.r_reg == pytest.approx(4.5, abs=1e-9)
        assert outcome.report.total_discounted == pytest.approx(4.5, abs=1e-9)

    def test_two_steps_match_grid(self):
        hp = joint_problem(
            gamma=0.9,
            lmp=(20.0, 35.0),
            rcp=(4.0, 1.0),
            device=DeviceSpec("lossy", 1.0, 0.8, 1.0, 1.0),
        )

        value = optimize(hp).solution.objective_value

        # the grid only sees a subset of the feasible set
        assert value >= grid_search(hp, steps=10) - 1e-9

    def test_certificate(self):
        hp = joint_problem(gamma=0.8, lmp=(20.0, 35.0, 15.0), rcp=(4.0, 6.0, 2.0))
        problem = build(hp)

        assert verify_certificate(problem, solve(problem)).passed


class TestConstruction:
    def test_joint_without_capacity_price(self):
        hp = HorizonProblem(
            UNIT,
            make_prices([10.0, 20.0]),
            RegulationParams.constant(2),
            mode=Mode.JOINT,
        )

        with pytest.raises(ConstructionError, match="regulation capacity price required"):
            build(hp)

    def test_joint_without_regulation_params(self):
        hp = HorizonProblem(UNIT, make_prices([10.0], [5.0]), mode=Mode.JOINT)

        with pytest.raises(ConstructionError, match="regulation parameters required"):
            build(hp)

    def test_regulation_length_mismatch(self):
        hp = HorizonProblem(
            UNIT,
            make_prices([10.0, 20.0], [5.0, 5.0]),
            RegulationParams.constant(3),
            mode=Mode.JOINT,
        )

        with pytest.raises(ConstructionError, match="delta_ru has 3 steps"):
            build(hp)

    def test_wrong_builder(self):
        with pytest.raises(ConstructionError, match="mode joint"):
            build_joint(arbitrage_problem([10.0]))
        with pytest.raises(ConstructionError, match="mode arbitrage"):
            build_arbitrage(joint_problem(gamma=1.0))

    @pytest.mark.parametrize(
        "changes, message",
        [
            ({"discount_rate_R": -0.1}, "discount rate"),
            ({"dt_hours": 0.5}, "does not match"),
            ({"device": DeviceSpec("bad", 1.0, 1.2, 1.0, 1.0)}, "round-trip"),
        ],
    )
    def test_invalid_problem(self, changes, message):
        hp = arbitrage_problem([10.0, 20.0])
        for name, value in changes.items():
            setattr(hp, name, value)

        with pytest.raises(ConstructionError, match=message):
            build(hp)

    def test_gaps_are_rejected(self):
        timestamps = pd.DatetimeIndex([START, datetime(2019, 6, 1, 1), datetime(2019, 6, 1, 3)])
        hp = HorizonProblem(UNIT, PriceSeries("N.Y.C.", timestamps, [1.0, 2.0, 3.0]))

        with pytest.raises(ConstructionError, match="gaps"):
            build(hp)

    def test_layout(self):
        problem = build(joint_problem(gamma=1.0, lmp=(1.0, 2.0), rcp=(1.0, 1.0)))

        assert problem.num_cols == 8
        assert problem.num_rows == 4
        assert problem.col_names[:3] == ["qr[0]", "qr[1]", "qd[0]"]
        assert problem.row_names[-1] == "power[1]"


class TestSchedule:
    def test_soc_follows_charges(self):
        outcome = optimize(arbitrage_problem([10.0, 20.0]))

        assert outcome.schedule.soc_s == pytest.approx([0.0, 1.0, 0.0], abs=1e-9)
        assert outcome.report.r_arb == pytest.approx(outcome.solution.objective_value)

    def test_self_discharge(self):
        device = DeviceSpec("leaky", 0.9, 1.0, 2.0, 1.0, initial_soc_s0=1.0)
        hp = arbitrage_problem([0.0, 0.0], device=device)
        x = np.array([0.0, 0.0, 0.0, 0.0, 0.9, 0.81])
        solution = LpSolution(LpStatus.OPTIMAL, x, 0.0, np.zeros(4), np.zeros(6), 0)

        schedule = extract_schedule(hp, solution)

        assert schedule.soc_s == pytest.approx([1.0, 0.9, 0.81])
        assert schedule.terminal_soc == pytest.approx(0.81)

    def test_idle_keeps_soc(self):
        hp = arbitrage_problem([0.0, 0.0, 0.0], device=UNIT.with_initial_soc(0.3))

        outcome = optimize(hp)

        assert outcome.schedule.soc_s == pytest.approx([0.3] * 4, abs=1e-9)
        assert outcome.report.total_discounted == pytest.approx(0.0, abs=1e-12)

    def test_non_optimal_solution(self):
        hp = arbitrage_problem([10.0])
        solution = LpSolution(LpStatus.INFEASIBLE, np.zeros(3), 0.0, np.zeros(2), np.zeros(3), 4)

        with pytest.raises(ContractError, match="infeasible"):
            extract_schedule(hp, solution)

    def test_wrong_solution_size(self):
        hp = arbitrage_problem([10.0])
        solution = LpSolution(LpStatus.OPTIMAL, np.zeros(5), 0.0, np.zeros(2), np.zeros(5), 1)

        with pytest.raises(ContractError, match="5 values"):
            extract_schedule(hp, solution)

    def test_head(self):
        outcome = optimize(arbitrage_problem([10.0, 20.0, 5.0]))

        head = outcome.schedule.head(2)

        assert head.steps == 2
        assert head.soc_s.size == 3
        assert len(head.timestamps) == 2


class TestSettle:
    def zero_schedule(self, hp):
        steps = hp.steps
        return Schedule(
            np.zeros(steps),
            np.zeros(steps),
            np.zeros(steps),
            np.full(steps + 1, hp.device.initial_soc_s0),
            hp.prices.timestamps,
        )

    def test_all_zero_schedule(self):
        hp = joint_problem(gamma=0.5, lmp=(12.0, 30.0), rcp=(3.0, 4.0))

        report = settle(hp, self.zero_schedule(hp))

        assert report.r_arb == 0.0
        assert report.r_reg == 0.0
        assert report.total_discounted == 0.0

    def test_refuses_infeasible_schedule(self):
        hp = arbitrage_problem([10.0, 20.0])
        schedule = self.zero_schedule(hp)
        schedule.charge_qr = np.array([2.0, 0.0])
        schedule.soc_s = np.array([0.0, 2.0, 2.0])

        with pytest.raises(InfeasibleScheduleError) as exc_info:
            settle(hp, schedule)

        violations = exc_info.value.violations
        assert any("above capacity" in v for v in violations)
        assert any("power cap" in v for v in violations)

    def test_broken_recursion(self):
        hp = arbitrage_problem([10.0, 20.0])
        schedule = self.zero_schedule(hp)
        schedule.soc_s = np.array([0.0, 0.5, 0.5])

        assert any("recursion" in v for v in schedule_violations(hp, schedule))

    def test_regulation_bid_in_arbitrage_mode(self):
        hp = arbitrage_problem([10.0])
        schedule = self.zero_schedule(hp)
        schedule.reg_bid_qreg = np.array([0.5])

        assert "regulation bid in arbitrage mode" in schedule_violations(hp, schedule)


class TestProperties:
    def test_objective_equals_settlement(self):
        rng = np.random.default_rng(42)
        for mode in (Mode.ARBITRAGE, Mode.JOINT):
            for _ in range(40):
                hp = random_horizon(rng, mode=mode)

                outcome = optimize(hp)

                assert outcome.status == LpStatus.OPTIMAL
                assert outcome.report.total_discounted == pytest.approx(
                    outcome.solution.objective_value, rel=1e-7, abs=1e-7
                )

    def test_joint_dominates_arbitrage(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            hp = random_horizon(rng, steps=24, mode=Mode.JOINT)
            joint = optimize(hp).solution.objective_value

            hp.mode = Mode.ARBITRAGE
            arbitrage = optimize(hp).solution.objective_value

            assert joint >= arbitrage - 1e-7

    @pytest.mark.parametrize("k", [0.5, 3.0])
    def test_price_scaling(self, k):
        rng = np.random.default_rng(19)
        for _ in range(10):
            hp = random_horizon(rng, mode=Mode.JOINT)
            base = optimize(hp).solution.objective_value

            hp.prices = hp.prices.scaled(k)
            scaled = optimize(hp).solution.objective_value

            assert scaled == pytest.approx(k * base, rel=1e-7, abs=1e-7)

    def test_capacity_monotonicity(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            hp = random_horizon(rng)
            small = optimize(hp).solution.objective_value

            hp.device = DeviceSpec(
                hp.device.name,
                hp.device.eta_s,
                hp.device.eta_c,
                2 * hp.device.energy_capacity_S,
                2 * hp.device.power_rating_Q,
                hp.device.initial_soc_s0,
            )
            large = optimize(hp).solution.objective_value

            assert large >= small - 1e-7

    def test_zero_prices(self):
        hp = arbitrage_problem(np.zeros(24), device=UNIT.with_initial_soc(0.5))

        assert optimize(hp).solution.objective_value == pytest.approx(0.0, abs=1e-12)

    def test_negative_prices_stay_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            hp = random_horizon(rng)
            hp.prices = hp.prices.scaled(-1.0)

            outcome = optimize(hp)

            assert outcome.status == LpStatus.OPTIMAL
            # sitting idle is feasible and earns nothing
            assert outcome.solution.objective_value >= -1e-9

    def test_schedules_are_feasible(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            hp = random_horizon(rng, mode=Mode.JOINT)
            hp.terminal_policy = TerminalPolicy.RETURN_TO_START

            outcome = optimize(hp)

            assert schedule_violations(hp, outcome.schedule) == []
            assert outcome.schedule.terminal_soc >= hp.device.initial_soc_s0 - 1e-9

    def test_small_horizons_match_grid(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            hp = random_horizon(rng, max_steps=2)

            value = optimize(hp).solution.objective_value

            assert value >= grid_search(hp, steps=8) - 1e-7

    @pytest.mark.parametrize("mode", [Mode.ARBITRAGE, Mode.JOINT])
    def test_unit_device_matches_grid(self, mode):
        rng = np.random.default_rng(27)
        on_grid = 0
        for _ in range(30):
            steps = int(rng.integers(1, 4))
            device = UNIT.with_initial_soc(float(rng.choice([0.0, 0.25, 0.5, 1.0])))
            prices = make_prices(rng.normal(30, 15, steps), rng.uniform(0, 10, steps))
            # no deployed energy, so the bid only competes for power
            reg = RegulationParams.constant(steps, delta_ru=0.0, delta_rd=0.0, gamma=0.9)
            hp = HorizonProblem(device, prices, reg, mode=mode)

            outcome = optimize(hp)
            value = outcome.solution.objective_value
            best = grid_search(hp, steps=20)

            assert value >= best - 1e-7
            schedule = outcome.schedule
            quantities = np.concatenate(
                [schedule.charge_qr, schedule.discharge_qd, schedule.reg_bid_qreg]
            )
            if np.allclose(quantities * 20, np.round(quantities * 20), atol=1e-9):
                on_grid += 1
                assert value <= best + 1e-6

        assert on_grid > 0
