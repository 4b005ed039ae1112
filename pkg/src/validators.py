from __future__ import annotations

import calendar
import re
from argparse import Namespace
from datetime import date
from typing import Any

import pytimeparse

from data_ingest import Suppression
from exceptions import ValidationError
from utils.validation import valid_hours, valid_seed

SUPPRESSION_RE = re.compile(
    r"^(?P<start>\d{4}-\d{2}(-\d{2})?):(?P<end>\d{4}-\d{2}(-\d{2})?)=(?P<factor>[0-9.]+)$"
)


def clean_hours(value: Any) -> float:
    """A plain number is hours, anything else goes through pytimeparse."""
    if isinstance(value, bool):
        raise TypeError("hours must be a number or a duration string")

    if isinstance(value, (int, float)):
        hours = float(value)
    else:
        text = str(value).strip()
        try:
            hours = float(text)
        except ValueError:
            seconds = pytimeparse.parse(text)
            if seconds is None:
                raise ValueError(f"not a duration: {text!r}")
            hours = seconds / 3600

    if not valid_hours(hours):
        raise ValueError

    return hours


def clean_date(text: str) -> date:
    return date.fromisoformat(text.strip())


def _month_or_day(text: str, last: bool) -> date:
    if len(text) == 7:
        year, month = int(text[:4]), int(text[5:])
        day = calendar.monthrange(year, month)[1] if last else 1
        return date(year, month, day)
    return date.fromisoformat(text)


def clean_suppression(text: str) -> Suppression:
    """``START:END=FACTOR`` with months (``2020-03:2020-12=0.6``) or days."""
    match = SUPPRESSION_RE.match(text.strip())
    if not match:
        raise ValueError(f"not a suppression window: {text!r}")

    suppression = Suppression(
        start=_month_or_day(match["start"], last=False),
        end=_month_or_day(match["end"], last=True),
        factor=float(match["factor"]),
    )
    if suppression.end < suppression.start or not (0 < suppression.factor <= 1):
        raise ValueError(f"invalid suppression window: {text!r}")
    return suppression


class Validator:
    def validate(self, args: Namespace) -> None:
        raise NotImplementedError

    @staticmethod
    def _clean_hours_arg(args: Namespace, name: str) -> None:
        value = getattr(args, name, None)
        if value is None:
            return
        try:
            setattr(args, name, clean_hours(value))
        except (TypeError, ValueError):
            flag = "--" + name.replace("_", "-")
            raise ValidationError(
                f'{flag} must be a number of hours or a duration string such as '
                f'"15m" or "1h30m", got {value!r}'
            )

    @staticmethod
    def _clean_date_arg(args: Namespace, name: str) -> None:
        value = getattr(args, name, None)
        if value is None:
            return
        try:
            setattr(args, name, clean_date(value))
        except ValueError:
            raise ValidationError(f"--{name} must be a date (YYYY-MM-DD), got {value!r}")

    @staticmethod
    def _check_non_negative(args: Namespace, name: str) -> None:
        value = getattr(args, name, None)
        if value is not None and not value >= 0:
            raise ValidationError(f"--{name} must be non-negative, got {value}")


class SolveValidator(Validator):
    def validate(self, args: Namespace) -> None:
        self._clean_hours_arg(args, "dt_hours")
        self._clean_hours_arg(args, "hours")
        self._clean_date_arg(args, "start")
        self._check_non_negative(args, "discount")


class GenValidator(Validator):
    def validate(self, args: Namespace) -> None:
        if args.days < 1:
            raise ValidationError(f"--days must be at least 1, got {args.days}")
        if not valid_seed(args.seed):
            raise ValidationError(f"--seed must be in [0, 2**32), got {args.seed}")
        self._check_non_negative(args, "noise")
        self._clean_hours_arg(args, "dt_hours")
        self._clean_date_arg(args, "start")

        suppressions = []
        for text in args.suppress or []:
            try:
                suppressions.append(clean_suppression(text))
            except ValueError:
                raise ValidationError(
                    f"--suppress expects START:END=FACTOR with 0 < FACTOR <= 1, "
                    f'e.g. "2020-03:2020-12=0.6", got {text!r}'
                )
        args.suppress = suppressions


class CampaignValidator(Validator):
    def validate(self, args: Namespace) -> None:
        self._clean_hours_arg(args, "dt_hours")
        self._clean_hours_arg(args, "horizon_hours")
        self._check_non_negative(args, "discount")
        if args.workers is not None and args.workers < 1:
            raise ValidationError(f"--workers must be at least 1, got {args.workers}")


class ReportValidator(Validator):
    def validate(self, args: Namespace) -> None:
        if (args.records is None) == (args.db is None):
            raise ValidationError("report needs exactly one of --records or --db")
        if args.run_id is not None and args.db is None:
            raise ValidationError("--run-id only applies with --db")
