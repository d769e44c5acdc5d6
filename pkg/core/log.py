# log.py
from __future__ import annotations

import logging
import os
import sys

_ENV_DEBUG = "PCBSAMPLE_DEBUG"
_configured = False


def debug_enabled() -> bool:
    val = (os.environ.get(_ENV_DEBUG) or "").strip().lower()
    return val in {"1", "true", "yes", "on"}


def configure(verbose: bool = False) -> None:
    """Route package log records to stderr. stdout stays free for reports."""
    global _configured
    level = logging.DEBUG if debug_enabled() else (logging.INFO if verbose else logging.WARNING)
    root = logging.getLogger("pcbsample")
    if not _configured:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    root.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    # core.sampling -> pcbsample.core.sampling, so one handler covers the tree
    return logging.getLogger(f"pcbsample.{name}")
