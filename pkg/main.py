"""Main module entry point for the sharp-finite-keys command line."""

import logging
import sys
from typing import List, Optional

from backend.cli.parser import build_parser
from backend.common.errors import ConfigurationError, DomainError, FiniteKeyError

EXIT_CONFIG = 2
EXIT_IO = 3


def _setup_logging(level: str = "INFO"):
    """Configure logging for the application."""
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.StreamHandler(),
        ],
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Parse the command line, run the subcommand and map errors to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)

    try:
        return args.func(args)
    except (ConfigurationError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except FiniteKeyError as e:
        logging.error("Evaluation failed: %s", str(e))
        raise
    except Exception as e:
        logging.error("Command %s failed: %s", args.command, str(e))
        raise


if __name__ == "__main__":
    sys.exit(main())
