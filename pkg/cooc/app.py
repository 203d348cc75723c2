from __future__ import annotations

import logging
import sys
from typing import Optional, Sequence

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def run_app(argv: Optional[Sequence[str]] = None) -> int:
    # cli imports configure_logging from this module
    from cooc.cli import cli

    return cli(sys.argv[1:] if argv is None else argv)
