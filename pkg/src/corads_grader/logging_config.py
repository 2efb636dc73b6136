"""Structured logging: JSON lines tagged with the CLI run ID and the ensemble member."""

from __future__ import annotations

import json
import logging
import uuid
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime, timezone
from typing import Any, Generator

# Set once per CLI invocation
run_id_var: ContextVar[str] = ContextVar("run_id", default="")
# Set while one ensemble member trains; preprocessing and cache lines inherit it
member_var: ContextVar[int | None] = ContextVar("member", default=None)

_EXTRA_FIELDS = ("scan_id", "batch", "operation", "duration_ms", "qwk", "loss")


def generate_run_id() -> str:
    return uuid.uuid4().hex[:12]


@contextmanager
def member_context(index: int) -> Generator[None, None, None]:
    token = member_var.set(index)
    try:
        yield
    finally:
        member_var.reset(token)


def _member(record: logging.LogRecord) -> int | None:
    explicit = getattr(record, "member", None)
    return explicit if explicit is not None else member_var.get()


class JSONFormatter(logging.Formatter):
    """One JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if run_id := run_id_var.get():
            entry["run_id"] = run_id
        if (member := _member(record)) is not None:
            entry["member"] = member
        for key in _EXTRA_FIELDS:
            value = getattr(record, key, None)
            if value is not None:
                entry[key] = value
        if record.exc_info and record.exc_info[1]:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


class TextFormatter(logging.Formatter):
    """Plain text prefixed with ``[run_id]`` or ``[run_id/mNN]``."""

    def format(self, record: logging.LogRecord) -> str:
        tag = run_id_var.get()
        if (member := _member(record)) is not None:
            tag = f"{tag}/m{member:02d}" if tag else f"m{member:02d}"
        prefix = f"[{tag}] " if tag else ""
        return f"{prefix}{super().format(record)}"


def setup_logging(level: str = "INFO", fmt: str = "json") -> None:
    """Replace the root handlers with one stderr handler in ``fmt`` (``json`` or ``text``)."""
    root = logging.getLogger()
    root.setLevel(getattr(logging, level.upper(), logging.INFO))
    root.handlers.clear()

    handler = logging.StreamHandler()
    if fmt == "json":
        handler.setFormatter(JSONFormatter())
    else:
        handler.setFormatter(TextFormatter("%(asctime)s %(levelname)-8s %(name)s: %(message)s"))
    root.addHandler(handler)

    # chatty at DEBUG
    for name in ("matplotlib", "PIL", "urllib3"):
        logging.getLogger(name).setLevel(logging.WARNING)
