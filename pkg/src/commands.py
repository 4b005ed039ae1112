from __future__ import annotations

import argparse
import json
from datetime import timedelta
from logging import getLogger
from pathlib import Path
from typing import TYPE_CHECKING, Type

import pandas as pd

from campaign import run as run_campaign
from campaign import (
    VALUE_COLUMNS,
    SocPolicy,
    build_manifest,
    config_hash,
    load_records,
    write_manifest,
    write_records,
)
from data_ingest import (
    SyntheticScenario,
    gen_synthetic,
    load_prices,
    load_regulation_overrides,
    write_prices,
)
from db import latest_run_id, load_result, open_store, save_result
from device import preset, validate
from entities import CampaignDocument, RunConfig, read_config
from exceptions import CertificateError, EssRevError, SolveFailed, ValidationError
from lp_core import dump_problem, solve, verify_certificate
from market_model import HorizonProblem, Mode, TerminalPolicy, build, extract_schedule, settle
from plots import plot_all
from reports import (
    campaign_tables,
    format_tables,
    revenue_summary,
    write_json,
    write_schedule,
    write_tables,
)
from settings import VERSION
from utils.formatting import format_interval
from validators import (
    CampaignValidator,
    GenValidator,
    ReportValidator,
    SolveValidator,
)

if TYPE_CHECKING:
    from campaign import CampaignResult
    from run_context import RunContext
    from validators import Validator


logger = getLogger(__name__)


class CommandHandlerRegistry(type):
    command_handlers: dict[str, Type[CommandHandler]] = {}

    def __new__(cls, name, bases, dct) -> CommandHandlerRegistry:  # type: ignore
        handler_cls = super().__new__(cls, name, bases, dct)
        if hasattr(handler_cls, "command_str"):
            cls.command_handlers[handler_cls.command_str] = handler_cls
        return handler_cls

    @classmethod
    def get_for_command_str(cls, command_str: str) -> Type[CommandHandler] | None:
        return cls.command_handlers.get(command_str)

    @classmethod
    def get_public_handlers(cls) -> list[Type[CommandHandler]]:
        handlers = []
        for handler_class in cls.command_handlers.values():
            if getattr(handler_class, "short_description", None):
                handlers.append(handler_class)

        return handlers


class CommandHandler(metaclass=CommandHandlerRegistry):
    command_str: str
    short_description: str
    validator_class: Type[Validator] | None = None
    validator: Validator | None

    def __init__(self, context: RunContext) -> None:
        self.context = context
        if self.validator_class:
            self.validator = self.validator_class()
        else:
            self.validator = None

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        pass

    def process(self, args: argparse.Namespace) -> int:
        raise NotImplementedError

    def validate(self, args: argparse.Namespace) -> None:
        if self.validator:
            self.validator.validate(args)

    def run(self, args: argparse.Namespace) -> int:
        try:
            self.validate(args)
            exit_code = self.process(args)
        except EssRevError as exc:
            logger.error("%s: %s", exc.module, exc)
            return exc.exit_code

        logger.info(
            "%s finished in %s, wrote %s",
            self.command_str,
            format_interval(self.context.get_uptime()),
            [str(path) for path in self.context.written],
        )
        return exit_code

    def _out_dir(self, args: argparse.Namespace, configured: Path | None) -> Path:
        if args.out_dir is None and configured is not None:
            self.context.out_dir = configured
        return self.context.out_dir


def _existing_file(value: str, flag: str) -> Path:
    path = Path(value)
    if not path.is_file():
        raise ValidationError(f"{flag}: file not found: {path}")
    return path


class SolveHandler(CommandHandler):
    command_str = "solve"
    short_description = "Optimise one horizon and write its schedule and revenue."
    validator_class = SolveValidator

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", help="run config (JSON)")
        parser.add_argument("--prices", help="price CSV")
        parser.add_argument("--location", help="location label inside the price file")
        parser.add_argument("--preset", help="device preset, e.g. li-ion")
        parser.add_argument("--mode", choices=[m.value for m in Mode])
        parser.add_argument("--dt-hours", help='step length, hours or "15m"')
        parser.add_argument("--discount", type=float, help="discount rate R per step")
        parser.add_argument("--terminal", choices=[t.value for t in TerminalPolicy])
        parser.add_argument("--regulation", help="regulation override CSV")
        parser.add_argument("--start", help="first day of the horizon (YYYY-MM-DD)")
        parser.add_argument("--hours", help="horizon length (default: whole file, or 24 h with --start)")
        parser.add_argument("--dump-lp", help="write the LP listing to this file")

    def _config(self, args: argparse.Namespace) -> RunConfig:
        if args.config:
            config_path = Path(args.config)
            config = RunConfig.from_json(read_config(config_path), config_path.parent)
        else:
            config = RunConfig()

        if args.prices:
            config.prices = _existing_file(args.prices, "--prices")
        if args.regulation:
            config.regulation_overrides = _existing_file(args.regulation, "--regulation")
        if args.location:
            config.location = args.location
        if args.preset:
            config.device = preset(args.preset)
        if args.mode:
            config.mode = Mode(args.mode)
        if args.dt_hours is not None:
            config.dt_hours = args.dt_hours
        if args.discount is not None:
            config.discount_rate_R = args.discount
        if args.terminal:
            config.terminal_policy = TerminalPolicy(args.terminal)
        if args.start is not None:
            config.start = args.start
        if args.hours is not None:
            config.hours = args.hours

        if config.prices is None:
            raise ValidationError("solve needs --prices or a config with prices")
        if config.device is None:
            raise ValidationError("solve needs --preset or a config with a device")
        return config

    def process(self, args: argparse.Namespace) -> int:
        config = self._config(args)
        out_dir = self._out_dir(args, config.out_dir)
        assert config.prices is not None and config.device is not None

        for warning in validate(config.device).warnings:
            logger.warning(warning)

        prices = load_prices(config.prices, config.schema, config.location, config.dt_hours)
        if config.start is not None or config.hours is not None:
            start = (
                pd.Timestamp(config.start) if config.start is not None else prices.timestamps[0]
            )
            hours = config.hours if config.hours is not None else 24.0
            prices = prices.between(start, start + timedelta(hours=hours))

        reg = None
        if config.mode == Mode.JOINT:
            overrides = (
                load_regulation_overrides(config.regulation_overrides)
                if config.regulation_overrides is not None
                else None
            )
            reg = config.regulation.params(prices.timestamps, overrides)

        hp = HorizonProblem(
            device=config.device,
            prices=prices,
            reg=reg,
            dt_hours=config.dt_hours or prices.step_hours,
            discount_rate_R=config.discount_rate_R,
            mode=config.mode,
            terminal_policy=config.terminal_policy,
        )
        problem = build(hp)
        if args.dump_lp:
            Path(args.dump_lp).write_text(dump_problem(problem))
            logger.info("LP listing written to %s", args.dump_lp)

        solution = solve(problem)
        logger.info(
            "%s %s: %s after %d iteration(s)",
            hp.device.name,
            hp.mode.value,
            solution.status.value,
            solution.iterations,
        )

        if not solution.optimal:
            write_json(self.context.output("revenue.json"), revenue_summary(hp, solution))
            raise SolveFailed(f"{hp.mode.value} problem is {solution.status.value}")

        certificate = verify_certificate(problem, solution)
        if not certificate.passed:
            write_json(
                self.context.output("revenue.json"),
                revenue_summary(hp, solution, certificate=certificate),
            )
            raise CertificateError(certificate.details)

        schedule = extract_schedule(hp, solution)
        report = settle(hp, schedule)

        write_schedule(self.context.output("schedule.csv"), hp, schedule, report)
        write_json(
            self.context.output("revenue.json"),
            revenue_summary(hp, solution, schedule, report, certificate),
        )

        print(f"r_arb: {report.r_arb:.6f}")
        print(f"r_reg: {report.r_reg:.6f}")
        print(f"total: {report.total_discounted:.6f}")
        logger.info("Wrote schedule and revenue to %s", out_dir)
        return 0


class GenHandler(CommandHandler):
    command_str = "gen"
    short_description = "Generate a synthetic price file."
    validator_class = GenValidator

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        defaults = SyntheticScenario()
        parser.add_argument("--days", type=int, default=defaults.days)
        parser.add_argument("--start", default=defaults.start.isoformat())
        parser.add_argument("--base", type=float, default=defaults.base_price)
        parser.add_argument("--amplitude", type=float, default=defaults.amplitude)
        parser.add_argument("--noise", type=float, default=defaults.noise)
        parser.add_argument("--rcp-ratio", type=float, default=defaults.rcp_ratio)
        parser.add_argument("--rcp-noise", type=float, default=defaults.rcp_noise)
        parser.add_argument(
            "--suppress",
            action="append",
            metavar="START:END=FACTOR",
            help='scale prices in a window, e.g. "2020-03:2020-12=0.6"',
        )
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--location", default=defaults.location)
        parser.add_argument("--dt-hours", default=defaults.dt_hours)
        parser.add_argument("--out", default="prices.csv", help="file name under --out-dir")

    def process(self, args: argparse.Namespace) -> int:
        scenario = SyntheticScenario(
            days=args.days,
            start=args.start,
            base_price=args.base,
            amplitude=args.amplitude,
            noise=args.noise,
            suppressions=args.suppress,
            rcp_ratio=args.rcp_ratio,
            rcp_noise=args.rcp_noise,
            location=args.location,
            dt_hours=args.dt_hours,
        )
        series = gen_synthetic(scenario, args.seed)

        path = self.context.output(args.out)
        write_prices(series, path)
        logger.info("Wrote %d steps of %s prices to %s", len(series), series.location, path)
        return 0


class CampaignHandler(CommandHandler):
    command_str = "campaign"
    short_description = "Run daily optimisations over a date range and tabulate revenues."
    validator_class = CampaignValidator

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", required=True, help="campaign config (JSON)")
        parser.add_argument("--prices", help="one price CSV for every location")
        parser.add_argument("--preset", action="append", help="device preset (repeatable)")
        parser.add_argument("--mode", action="append", choices=[m.value for m in Mode])
        parser.add_argument("--soc-policy", choices=[p.value for p in SocPolicy])
        parser.add_argument("--dt-hours")
        parser.add_argument("--horizon-hours", help="look-ahead, at least 24 h")
        parser.add_argument("--discount", type=float)
        parser.add_argument("--workers", type=int)
        parser.add_argument("--plot", action="store_true", help="also write SVG figures")
        parser.add_argument("--db", help="also store records in this SQLite file")
        parser.add_argument(
            "--value", choices=VALUE_COLUMNS, default="total", help="revenue column to tabulate"
        )

    def _document(self, args: argparse.Namespace) -> CampaignDocument:
        config_path = Path(args.config)
        document = CampaignDocument.from_json(read_config(config_path), config_path.parent)

        if args.prices:
            document.prices = {"*": _existing_file(args.prices, "--prices")}
        if args.preset is not None:
            document.devices = [preset(name) for name in args.preset]
        if args.mode is not None:
            document.modes = [Mode(mode) for mode in args.mode]
        if args.soc_policy:
            document.soc_policy = SocPolicy(args.soc_policy)
        if args.dt_hours is not None:
            document.dt_hours = args.dt_hours
        if args.horizon_hours is not None:
            document.horizon_hours = args.horizon_hours
        if args.discount is not None:
            document.discount_rate_R = args.discount
        if args.workers is not None:
            document.workers = args.workers
        if args.db:
            document.db = Path(args.db)
        return document

    def process(self, args: argparse.Namespace) -> int:
        document = self._document(args)
        out_dir = self._out_dir(args, document.out_dir)
        prices = document.load_prices()
        overrides = (
            load_regulation_overrides(document.regulation_overrides)
            if document.regulation_overrides is not None
            else None
        )
        config = document.to_campaign_config(overrides)
        result = run_campaign(config, prices, document.workers)

        resolved = document.resolved()
        manifest = build_manifest(
            resolved, result, [prices[location] for location in config.locations]
        )
        write_records(result, self.context.output("records.csv"))
        write_manifest(manifest, self.context.output("manifest.json"))

        tables = campaign_tables(result, args.value)
        self.context.written.extend(write_tables(tables, out_dir))
        if args.plot:
            self.context.written.extend(plot_all(tables, out_dir))

        if document.db is not None:
            session = open_store(document.db)()
            run_id = save_result(
                session,
                result,
                json.dumps(manifest, sort_keys=True),
                config_hash(resolved),
                VERSION,
            )
            print(f"run id: {run_id}")

        print(format_tables({"annual": tables["annual"], "yoy": tables["yoy"]}))
        if result.failures:
            logger.warning(
                "%d day(s) failed, see manifest.json for the list", len(result.failures)
            )
        return 0


class ReportHandler(CommandHandler):
    command_str = "report"
    short_description = "Rebuild revenue tables and figures from stored records."
    validator_class = ReportValidator

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--records", help="records CSV written by campaign")
        parser.add_argument("--db", help="SQLite record store written by campaign --db")
        parser.add_argument("--run-id", type=int, help="run inside --db (default: latest)")
        parser.add_argument("--value", choices=VALUE_COLUMNS, default="total")
        parser.add_argument("--plot", action="store_true")
        parser.add_argument("--page", type=int, default=1)

    def _load(self, args: argparse.Namespace) -> CampaignResult:
        if args.records is not None:
            return load_records(args.records)

        db_path = _existing_file(args.db, "--db")
        session = open_store(db_path)()
        run_id = args.run_id if args.run_id is not None else latest_run_id(session)
        if run_id is None:
            raise ValidationError(f"{db_path} holds no runs")
        return load_result(session, run_id)

    def process(self, args: argparse.Namespace) -> int:
        result = self._load(args)
        out_dir = self.context.out_dir

        tables = campaign_tables(result, args.value)
        self.context.written.extend(write_tables(tables, out_dir))
        if args.plot:
            self.context.written.extend(plot_all(tables, out_dir))

        print(format_tables(tables, args.page))
        return 0
