from argparse import Namespace
from datetime import date

import pytest

from data_ingest import Suppression
from exceptions import ValidationError
from validators import (
    CampaignValidator,
    GenValidator,
    ReportValidator,
    SolveValidator,
    clean_hours,
    clean_suppression,
)


class TestCleanHours:
    @pytest.mark.parametrize(
        "value, expected",
        [
            (1, 1.0),
            (0.25, 0.25),
            ("48", 48.0),
            ("15m", 0.25),
            ("1h30m", 1.5),
            ("2 days", 48.0),
        ],
    )
    def test_valid(self, value, expected):
        assert clean_hours(value) == pytest.approx(expected)

    @pytest.mark.parametrize("value", ["soon", "0", -1.0, 9000])
    def test_invalid(self, value):
        with pytest.raises(ValueError):
            clean_hours(value)

    def test_bool(self):
        with pytest.raises(TypeError):
            clean_hours(True)


class TestCleanSuppression:
    def test_months(self):
        assert clean_suppression("2020-03:2020-12=0.6") == Suppression(
            date(2020, 3, 1), date(2020, 12, 31), 0.6
        )

    def test_days(self):
        assert clean_suppression("2020-02-10:2020-02-29=1") == Suppression(
            date(2020, 2, 10), date(2020, 2, 29), 1.0
        )

    @pytest.mark.parametrize(
        "text", ["2020-03=0.6", "2020-12:2020-03=0.6", "2020-03:2020-12=1.5", "2020-03:2020-12=0"]
    )
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            clean_suppression(text)


class TestValidators:
    def test_solve(self):
        args = Namespace(dt_hours="30m", hours="2d", start="2019-06-01", discount=0.0)

        SolveValidator().validate(args)

        assert args.dt_hours == 0.5
        assert args.hours == 48.0
        assert args.start == date(2019, 6, 1)

    def test_solve_bad_date(self):
        args = Namespace(dt_hours=None, hours=None, start="June", discount=None)

        with pytest.raises(ValidationError, match="--start"):
            SolveValidator().validate(args)

    def test_solve_negative_discount(self):
        args = Namespace(dt_hours=None, hours=None, start=None, discount=-0.1)

        with pytest.raises(ValidationError, match="--discount"):
            SolveValidator().validate(args)

    def gen_args(self, **kwargs):
        fields = {
            "days": 30,
            "seed": 7,
            "noise": 5.0,
            "dt_hours": None,
            "start": None,
            "suppress": None,
            **kwargs,
        }
        return Namespace(**fields)

    def test_gen(self):
        args = self.gen_args(suppress=["2020-03:2020-12=0.6"])

        GenValidator().validate(args)

        assert args.suppress == [Suppression(date(2020, 3, 1), date(2020, 12, 31), 0.6)]

    @pytest.mark.parametrize(
        "changes, flag",
        [
            ({"days": 0}, "--days"),
            ({"seed": -1}, "--seed"),
            ({"noise": -2.0}, "--noise"),
            ({"dt_hours": "never"}, "--dt-hours"),
            ({"suppress": ["march=0.5"]}, "--suppress"),
        ],
    )
    def test_gen_invalid(self, changes, flag):
        with pytest.raises(ValidationError, match=flag):
            GenValidator().validate(self.gen_args(**changes))

    def test_campaign_workers(self):
        args = Namespace(dt_hours=None, horizon_hours="36h", discount=None, workers=0)

        with pytest.raises(ValidationError, match="--workers"):
            CampaignValidator().validate(args)

    @pytest.mark.parametrize(
        "records, db, run_id",
        [(None, None, None), ("records.csv", "runs.db", None), ("records.csv", None, 3)],
    )
    def test_report_sources(self, records, db, run_id):
        with pytest.raises(ValidationError):
            ReportValidator().validate(Namespace(records=records, db=db, run_id=run_id))
