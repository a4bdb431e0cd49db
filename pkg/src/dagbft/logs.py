"""
Logging setup for dagbft.

Every module grabs its logger with get_logger(__name__). Nothing is printed
until setup_logging() is called (the CLI does that), so the library stays
quiet when imported by tests or other code.

Two destinations:
- stderr through rich's RichHandler (warnings by default)
- <out_dir>/dagbft.log.jsonl, one JSON object per record
"""
from pathlib import Path
from typing import Optional
import json
import logging

from rich.console import Console
from rich.logging import RichHandler

ROOT_LOGGER = "dagbft"
LOG_FILE_NAME = "dagbft.log.jsonl"

# Attributes every LogRecord has; anything else came in through `extra=`
_STANDARD_ATTRS = set(vars(logging.makeLogRecord({})).keys()) | {"message", "asctime"}


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger under the dagbft namespace.

    Args:
        name: Usually __name__ of the calling module

    Returns:
        Logger whose records propagate to the handlers setup_logging installs
    """
    if name == ROOT_LOGGER or name.startswith(ROOT_LOGGER + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


class JsonLinesFormatter(logging.Formatter):
    """Render a record as one JSON line, keeping structured `extra` fields."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in vars(record).items():
            if key not in _STANDARD_ATTRS and not key.startswith("_"):
                payload[key] = value
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, sort_keys=True, default=str)


def setup_logging(out_dir: Optional[Path] = None, verbose: bool = False) -> None:
    """
    Install handlers on the dagbft root logger.

    Safe to call more than once; previous dagbft handlers are replaced.

    Args:
        out_dir: Directory for the JSON-lines log file (None = no file)
        verbose: Show INFO on stderr instead of only warnings
    """
    root = logging.getLogger(ROOT_LOGGER)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False

    console_handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    console_handler.setLevel(logging.INFO if verbose else logging.WARNING)
    root.addHandler(console_handler)

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(out_dir / LOG_FILE_NAME, mode="w", encoding="utf-8")
        file_handler.setFormatter(JsonLinesFormatter())
        file_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
        root.addHandler(file_handler)
