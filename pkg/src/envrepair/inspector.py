"""Static import extraction from a single source file.

The scan is line-oriented and regex based. It never imports or executes the
file, so broken or Python 2 code is handled the same as anything else.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import UnsupportedInterpreter
from .interpreters import SUPPORTED_SERIES, InterpreterVersion
from .models import ModuleRequirement


@dataclass(frozen=True)
class SourceFile:
    path: Path
    content: str
    line_count: int

    @classmethod
    def read(cls, path: str | Path) -> SourceFile:
        path = Path(path)
        content = path.read_text(encoding="utf-8", errors="replace")
        return cls.from_text(content, path)

    @classmethod
    def from_text(cls, content: str, path: str | Path = "snippet.py") -> SourceFile:
        return cls(Path(path), content, len(content.splitlines()))


@dataclass(frozen=True)
class ImportMention:
    raw_statement: str
    top_level_name: str
    line_number: int


_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_IMPORT_RE = re.compile(r"^import\s+(?P<names>.+)$")
_FROM_RE = re.compile(r"^from\s+(?P<dots>\.*)\s*(?P<module>[A-Za-z_][\w.]*)?\s+import\b")
_TRIPLE = re.compile(r'"""|\'\'\'')


def _strip_comment(line: str) -> str:
    # Good enough for import lines: a '#' inside a string on an import line is
    # not something real code does.
    idx = line.find("#")
    return line if idx < 0 else line[:idx]


def _logical_lines(content: str) -> Iterable[tuple[int, str]]:
    """Yield (line_number, code) with backslash continuations joined and
    triple-quoted string bodies dropped."""
    in_string: str | None = None
    pending: list[str] = []
    start = 0
    for number, raw in enumerate(content.splitlines(), start=1):
        line = raw
        if in_string is not None:
            end = line.find(in_string)
            if end < 0:
                continue
            line = line[end + 3:]
            in_string = None
        # Remove complete triple-quoted segments on this line, then detect an
        # unterminated opener.
        out = []
        pos = 0
        while True:
            m = _TRIPLE.search(line, pos)
            if m is None:
                out.append(line[pos:])
                break
            out.append(line[pos:m.start()])
            close = line.find(m.group(), m.end())
            if close < 0:
                in_string = m.group()
                break
            pos = close + 3
        code = "".join(out)
        if not pending:
            start = number
        if code.rstrip().endswith("\\"):
            pending.append(code.rstrip()[:-1])
            continue
        pending.append(code)
        yield start, " ".join(pending)
        pending = []
    if pending:
        yield start, " ".join(pending)


def _statements(code: str) -> list[str]:
    return [s.strip() for s in _strip_comment(code).split(";") if s.strip()]


def _names_from_statement(stmt: str) -> list[str]:
    m = _FROM_RE.match(stmt)
    if m:
        if m.group("dots") or not m.group("module"):
            return []
        return [m.group("module").split(".")[0]]
    m = _IMPORT_RE.match(stmt)
    if not m:
        return []
    names = []
    for part in m.group("names").split(","):
        dotted = part.strip().split()
        if not dotted:
            continue
        top = dotted[0].split(".")[0]
        if _IDENT.match(top):
            names.append(top)
    return names


def extract_imports(file: SourceFile) -> list[ImportMention]:
    """Every top-level module named by an import statement, first occurrence wins."""
    seen: dict[str, ImportMention] = {}
    for number, code in _logical_lines(file.content):
        for stmt in _statements(code):
            if not (stmt.startswith("import") or stmt.startswith("from")):
                continue
            for name in _names_from_statement(stmt):
                if name not in seen:
                    seen[name] = ImportMention(stmt, name, number)
    return list(seen.values())


@lru_cache(maxsize=None)
def stdlib_names(series: str) -> frozenset[str]:
    if series not in SUPPORTED_SERIES:
        raise UnsupportedInterpreter(series)
    text = resources.files("envrepair.data").joinpath("stdlib", f"{series}.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def is_stdlib(name: str, interpreter: InterpreterVersion) -> bool:
    return name in stdlib_names(interpreter.series)


def filter_stdlib(mentions: list[ImportMention], interpreter: InterpreterVersion) -> list[ImportMention]:
    names = stdlib_names(interpreter.series)
    return [m for m in mentions if m.top_level_name not in names]


@dataclass(frozen=True)
class NameMapping:
    """Import name -> install name, identity for anything not listed."""

    entries: Mapping[str, str] = field(default_factory=dict)

    def lookup(self, import_name: str) -> str:
        return self.entries.get(import_name, import_name)

    def extended(self, extra: Mapping[str, str]) -> NameMapping:
        return NameMapping({**self.entries, **extra})

    @classmethod
    def load(cls, path: str | Path) -> NameMapping:
        return cls(_parse_mapping(Path(path).read_text("utf-8")))

    @classmethod
    def default(cls) -> NameMapping:
        text = resources.files("envrepair.data").joinpath("name_mapping.json").read_text("utf-8")
        return cls(_parse_mapping(text))


def _parse_mapping(text: str) -> dict[str, str]:
    data = json.loads(text)
    if not isinstance(data, dict) or not all(
        isinstance(k, str) and isinstance(v, str) and k and v for k, v in data.items()
    ):
        raise ValueError("name mapping must be a JSON object of non-empty strings")
    return dict(data)


def to_requirements(mentions: list[ImportMention], mapping: NameMapping) -> list[ModuleRequirement]:
    return [ModuleRequirement(m.top_level_name, mapping.lookup(m.top_level_name)) for m in mentions]
