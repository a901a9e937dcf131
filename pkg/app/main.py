"""netmatch command line: census, estimate, simulate, baselines, evaluate-matches"""
import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from app.commands import baselines, census, estimate, evaluate, simulate
from app.dependencies import configure_logging, get_settings
from app.errors import NetMatchError
from app.utils.constants import EXIT_CODES

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=get_settings().APP_NAME,
        description="Average direct effects on networks by matching on neighborhood subgraph counts",
    )
    parser.add_argument("--log-level", default=None, help="override LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (census, estimate, simulate, baselines, evaluate):
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    config = get_settings()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(config, args.log_level)

    logger.info("Running %s", args.command)
    try:
        args.handler(args)
    except NetMatchError as e:
        print(f"{config.APP_NAME}: {e.detail}", file=sys.stderr)
        return e.exit_code
    logger.info("Finished %s", args.command)
    return EXIT_CODES["SUCCESS"]


if __name__ == "__main__":
    sys.exit(main())
