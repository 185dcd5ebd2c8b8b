"""Logger setup for the command line entry points."""

import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

DEFAULT_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"


def setup_logger(verbose: bool = False, level: Optional[str] = None,
                 fmt: str = DEFAULT_FORMAT) -> logging.Logger:
    """Configure the ``gridjoin`` logger once and return it.

    Log records go to stderr so that report output on stdout stays machine readable.
    """
    if verbose:
        resolved = logging.DEBUG
    else:
        resolved = logging.getLevelName((level or "INFO").upper())
        if not isinstance(resolved, int):
            resolved = logging.INFO

    logger = logging.getLogger("gridjoin")
    logger.setLevel(resolved)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=Console(stderr=True), show_time=False,
                              show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter(fmt))
        logger.addHandler(handler)
    for handler in logger.handlers:
        handler.setLevel(resolved)
    return logger
