#!/usr/bin/env python3
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from commands import CommandHandlerRegistry
from run_context import RunContext
from settings import VERSION, get_settings
from utils.logging import CustomFormatter


def init_logging(verbose: bool = False) -> None:
    settings = get_settings()
    logging.basicConfig(
        format="%(asctime)s %(levelname)-5s %(name)-16s > %(message)s",
        level=logging.DEBUG if verbose else settings.log_level,
    )

    logger = logging.getLogger()
    for handler in logger.root.handlers:  # type: ignore
        handler.setFormatter(CustomFormatter(handler.formatter._fmt))

    if settings.environment == "dev":
        logging.getLogger("sqlalchemy.engine").setLevel(logging.INFO)
    # font lookup chatter
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="essrev",
        description="Revenue of energy storage in energy and regulation markets.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for handler_class in CommandHandlerRegistry.get_public_handlers():
        subparser = subparsers.add_parser(
            handler_class.command_str, help=handler_class.short_description
        )
        subparser.add_argument("--out-dir", help="directory for output files (default: .)")
        handler_class.add_arguments(subparser)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, usage errors are 1 here
        return 0 if exc.code == 0 else 1

    init_logging(args.verbose)

    handler_class = CommandHandlerRegistry.get_for_command_str(args.command)
    assert handler_class
    handler = handler_class(RunContext(Path(args.out_dir or ".")))
    return handler.run(args)


if __name__ == "__main__":
    sys.exit(main())
