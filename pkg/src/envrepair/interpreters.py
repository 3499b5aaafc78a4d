"""Supported interpreter series and their release windows."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources

from .errors import UnsupportedInterpreter

DEFAULT_SERIES = "3.6"


@lru_cache(maxsize=None)
def _table() -> dict[str, dict[str, str]]:
    text = resources.files("envrepair.data").joinpath("interpreters.json").read_text("utf-8")
    return json.loads(text)


def _series_key(series: str) -> tuple[int, int]:
    major, minor = series.split(".")
    return int(major), int(minor)


SUPPORTED_SERIES: tuple[str, ...] = tuple(sorted(_table(), key=_series_key))
PY3_SERIES: tuple[str, ...] = tuple(s for s in SUPPORTED_SERIES if s.startswith("3."))


@dataclass(frozen=True, order=False)
class InterpreterVersion:
    series: str

    def __post_init__(self) -> None:
        if self.series not in SUPPORTED_SERIES:
            raise UnsupportedInterpreter(self.series)

    @property
    def key(self) -> tuple[int, int]:
        return _series_key(self.series)

    @property
    def patch_release(self) -> str:
        """Full version the series' container image ships, used for specifier checks."""
        return _table()[self.series]["patch"]

    def __lt__(self, other: InterpreterVersion) -> bool:
        return self.key < other.key

    def __le__(self, other: InterpreterVersion) -> bool:
        return self.key <= other.key

    def __gt__(self, other: InterpreterVersion) -> bool:
        return self.key > other.key

    def __ge__(self, other: InterpreterVersion) -> bool:
        return self.key >= other.key

    def __str__(self) -> str:
        return self.series


@dataclass(frozen=True)
class InterpreterWindow:
    interpreter: InterpreterVersion
    window_start: datetime
    window_end: datetime

    def __post_init__(self) -> None:
        if not self.window_start < self.window_end:
            raise ValueError("window_start must precede window_end")

    def contains(self, moment: datetime) -> bool:
        return self.window_start <= moment <= self.window_end


def _date(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%d").replace(tzinfo=timezone.utc)


def window_for(interpreter: InterpreterVersion, now: datetime | None = None) -> InterpreterWindow:
    """Release window of a series: first release up to end of support (or now, if sooner)."""
    row = _table()[interpreter.series]
    now = now or datetime.now(timezone.utc)
    end = min(_date(row["end_of_support"]), now)
    return InterpreterWindow(interpreter, _date(row["released"]), end)


_VERSION_RE = re.compile(r"(\d+)(?:\.(\d+))?")


def normalize_series(text: str | None) -> tuple[InterpreterVersion, str | None]:
    """Map free-text interpreter replies onto a supported series.

    Returns the series plus a warning message when the reply had to be coerced
    to something other than what it literally said.
    """
    m = _VERSION_RE.search(text or "")
    if m is None:
        return InterpreterVersion(DEFAULT_SERIES), f"unparseable interpreter {text!r}; using {DEFAULT_SERIES}"
    major = int(m.group(1))
    if m.group(2) is None:
        if major == 2:
            return InterpreterVersion("2.7"), None
        if major == 3:
            return InterpreterVersion(DEFAULT_SERIES), None
        return InterpreterVersion(DEFAULT_SERIES), f"unsupported interpreter {text!r}; using {DEFAULT_SERIES}"
    series = f"{major}.{int(m.group(2))}"
    if series in SUPPORTED_SERIES:
        return InterpreterVersion(series), None
    if major == 2:
        return InterpreterVersion("2.7"), f"unsupported interpreter {text!r}; using 2.7"
    if major == 3:
        minor = int(m.group(2))
        nearest = min(PY3_SERIES, key=lambda s: abs(_series_key(s)[1] - minor))
        return InterpreterVersion(nearest), f"unsupported interpreter {text!r}; using {nearest}"
    return InterpreterVersion(DEFAULT_SERIES), f"unsupported interpreter {text!r}; using {DEFAULT_SERIES}"
