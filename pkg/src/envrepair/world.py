"""Simulated package worlds for offline validation.

A world is one JSON document::

    {
      "registry": {"<install name>": <index JSON document, see registry.py>},
      "programs": {
        "<program id>": {
          "source": "<file text>",
          "syntax": ["3.4", ...],            # series able to parse the file
          "requires": [                      # checked in this order at run time
            {"import": "keras", "install": "keras",
             "good": {"3.6": ["2.0.9"]},     # versions that work, per series
             "failure": "import" | "attribute",   # optional, else chosen by hash
             "symbol": "Dense",              # optional name used in messages
             "via": "keras"},                # optional: imported by this package, not the file
            ...
          ],
          "runnable": ["3.6|keras==2.0.9;tensorflow==2.4.4"],   # optional extra gate
          "run_seconds": 1.0,
          "nonzero_exit": false
        }
      },
      "conflicts": [{"first": "a", "first_versions": [...], "second": "b", "second_versions": [...]}]
    }

On disk a world directory holds ``world.json``, ``registry/<name>.json`` (one
index document per package, readable by FixtureSource) and ``programs/<id>.py``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from .interpreters import PY3_SERIES, InterpreterVersion, window_for
from .errors import UnknownPackage
from .registry import catalog_from_document, filter_for_interpreter, normalize_name

WORLD_FILE = "world.json"


@dataclass
class World:
    registry: dict[str, dict] = field(default_factory=dict)
    programs: dict[str, dict] = field(default_factory=dict)
    conflicts: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_norm = {normalize_name(k): k for k in self.registry}
        self._by_source = {p.get("source", "").strip(): pid for pid, p in self.programs.items()}

    # -- lookups -------------------------------------------------------------

    def document(self, install_name: str) -> dict | None:
        key = self._by_norm.get(normalize_name(install_name))
        return self.registry[key] if key else None

    def program_for(self, source: str) -> dict:
        pid = self._by_source.get(source.strip())
        if pid is not None:
            return self.programs[pid]
        if len(self.programs) == 1:
            return next(iter(self.programs.values()))
        raise KeyError("no program in the world matches this source")

    def knowledge(self, install_name: str, series: str) -> list[str]:
        """What a model might remember: every published version, window ignored."""
        doc = self.document(install_name)
        return catalog_from_document(install_name, doc).versions if doc else []

    # -- persistence -----------------------------------------------------------

    def to_json(self) -> dict:
        return {"registry": self.registry, "programs": self.programs, "conflicts": self.conflicts}

    @classmethod
    def from_json(cls, data: dict) -> World:
        return cls(dict(data.get("registry", {})), dict(data.get("programs", {})), list(data.get("conflicts", [])))

    @classmethod
    def load(cls, path: str | Path) -> World:
        path = Path(path)
        if path.is_dir():
            path = path / WORLD_FILE
        return cls.from_json(json.loads(path.read_text("utf-8")))

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        (directory / "registry").mkdir(parents=True, exist_ok=True)
        (directory / "programs").mkdir(parents=True, exist_ok=True)
        (directory / WORLD_FILE).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True), "utf-8")
        for name, doc in self.registry.items():
            (directory / "registry" / f"{normalize_name(name)}.json").write_text(json.dumps(doc), "utf-8")
        for pid, prog in self.programs.items():
            (directory / "programs" / f"{pid}.py").write_text(prog.get("source", ""), "utf-8")
        return directory


class WorldSource:
    """Registry source answering from a world's embedded index documents."""

    def __init__(self, world: World) -> None:
        self.world = world

    def get_document(self, install_name: str) -> dict:
        doc = self.world.document(install_name)
        if doc is None:
            raise UnknownPackage(install_name)
        return doc


def index_document(name: str, releases: Sequence[tuple[str, datetime | None, str | None]]) -> dict:
    """An index JSON document from (version, upload time, requires_python) triples."""
    out: dict[str, list] = {}
    for version, when, requires in releases:
        stamp = when.strftime("%Y-%m-%dT%H:%M:%S.000000Z") if when else None
        out[version] = [{
            "filename": f"{name.replace('-', '_')}-{version}.tar.gz",
            "upload_time_iso_8601": stamp,
            "requires_python": requires,
            "yanked": False,
        }]
    return {"info": {"name": name, "requires_python": None}, "releases": out}


# -- generation ------------------------------------------------------------------

_UTC = timezone.utc
_EPOCH = datetime(2012, 1, 1, tzinfo=_UTC)
_SYLLABLES = ["zor", "qua", "vel", "mip", "dax", "lun", "kep", "tro", "sil", "bam", "rex", "hol", "fyn", "gor"]
# Aliases exercise the import/install name mapping.
_MAPPED = [("sklearn", "scikit-learn"), ("bs4", "beautifulsoup4"), ("yaml", "pyyaml"), ("cv2", "opencv-python")]


def _releases(rng: random.Random, count: int, start: datetime, days: int, py3_from: int | None
              ) -> list[tuple[str, datetime, str | None]]:
    out = []
    major, minor, patch = 0, rng.randint(1, 9), 0
    for i in range(count):
        when = start + timedelta(days=days * i + rng.randint(0, max(1, days // 3)))
        roll = rng.random()
        if roll < 0.15:
            major, minor, patch = major + 1, 0, 0
        elif roll < 0.6:
            minor, patch = minor + 1, 0
        else:
            patch += 1
        requires = None
        if py3_from is not None and i >= py3_from:
            requires = ">=3.7" if when.year >= 2020 else ">=3.5"
        out.append((f"{major}.{minor}.{patch}", when, requires))
    return out


def _window_versions(doc: dict, name: str, series: str) -> list[str]:
    catalog = catalog_from_document(name, doc)
    now = datetime(2026, 1, 1, tzinfo=_UTC)
    return filter_for_interpreter(catalog, window_for(InterpreterVersion(series), now)).versions


def _band(rng: random.Random, versions: list[str], fraction: float) -> list[str]:
    width = max(1, round(len(versions) * fraction))
    start = rng.randint(0, len(versions) - width)
    return versions[start:start + width]


def _source(rng: random.Random, imports: list[str], py2: bool, fstrings: bool) -> str:
    lines = ["#!/usr/bin/env python", "import os", "import sys"]
    for i, name in enumerate(imports):
        if i % 2:
            lines.append(f"from {name} import helper_{i}")
        else:
            lines.append(f"import {name}")
    lines.append("")
    lines.append("def main():")
    lines.append(f"    value = {rng.randint(1, 99)}")
    if py2:
        lines.append('    print "value:", value')
    elif fstrings:
        lines.append('    print(f"value: {value}")')
    else:
        lines.append('    print("value: %d" % value)')
    lines.append("")
    lines.append("main()")
    return "\n".join(lines) + "\n"


def generate_world(seed: int, solvable: int, unsolvable: int = 0, max_modules: int = 2,
                   band_fraction: float = 0.4, conflict_rate: float = 0.25, hidden_rate: float = 0.3) -> World:
    """A random world with ``solvable`` programs that have a working candidate and ``unsolvable`` that do not.

    Solvable programs target a series the default interpreter expansion covers
    (2.7 for Python 2 code, otherwise 3.5 to 3.7) and give every required
    package a contiguous band of working releases inside that series' window,
    at least ``band_fraction`` of the plausible releases wide. Unsolvable
    programs have a package that works nowhere, with at least 12 plausible
    releases per window so the version space outlasts the loop budget.
    """
    rng = random.Random(seed)
    world = World()
    used: set[str] = set()

    def fresh_name() -> str:
        while True:
            name = "".join(rng.sample(_SYLLABLES, 2)) + rng.choice(["", "py", "lib", "kit"])
            if name not in used:
                used.add(name)
                return name

    def make_package(install: str, dense: bool) -> dict:
        if dense:
            rel = _releases(rng, 110, datetime(2011, 1, 1, tzinfo=_UTC), 40, None)
        else:
            count = rng.randint(14, 30)
            start = _EPOCH + timedelta(days=rng.randint(0, 600))
            span = rng.randint(3000, 4000)
            rel = _releases(rng, count, start, span // count, rng.choice([None, count - 4]))
        doc = index_document(install, rel)
        world.registry[install] = doc
        return doc

    total = solvable + unsolvable
    for index in range(total):
        ok = index < solvable
        pid = f"p{index:03d}"
        py2 = ok and rng.random() < 0.2
        target = "2.7" if py2 else rng.choice(["3.5", "3.6", "3.7"])
        fstrings = not py2 and ok and target != "3.5" and rng.random() < 0.3
        syntax = ["2.7"] if py2 else [
            s for s in PY3_SERIES if not fstrings or InterpreterVersion(s) >= InterpreterVersion("3.6")]
        if not py2 and not fstrings and rng.random() < 0.5:
            syntax = ["2.7", *syntax]

        k = rng.randint(1, max_modules)
        requires = []
        imports = []
        for j in range(k):
            if rng.random() < 0.15:
                alias, install = rng.choice(_MAPPED)
                if install in world.registry or alias in imports:
                    alias = install = fresh_name()
            else:
                alias = install = fresh_name()
            dense = not ok and j == 0
            doc = make_package(install, dense)
            imports.append(alias)
            good: dict[str, list[str]] = {}
            if ok:
                good[target] = _band(rng, _window_versions(doc, install, target), band_fraction)
            req = {"import": alias, "install": install, "good": good}
            requires.append(req)
        if ok and rng.random() < hidden_rate:
            install = fresh_name()
            doc = make_package(install, False)
            requires.append({"import": install, "install": install, "via": imports[0],
                             "good": {target: _band(rng, _window_versions(doc, install, target), band_fraction)}})
        if ok and len(requires) >= 2 and rng.random() < conflict_rate:
            a, b = requires[0], requires[1]
            a_bad = [v for v in _window_versions(world.registry[a["install"]], a["install"], target)
                     if v not in a["good"][target]]
            b_all = _window_versions(world.registry[b["install"]], b["install"], target)
            if a_bad:
                world.conflicts.append({"first": a["install"], "first_versions": a_bad[: max(1, len(a_bad) // 2)],
                                        "second": b["install"], "second_versions": b_all})
        world.programs[pid] = {
            "source": _source(rng, imports, py2, fstrings),
            "syntax": syntax,
            "requires": requires,
            "run_seconds": round(rng.uniform(0.2, 3.0), 2),
            "nonzero_exit": False,
            "solvable": ok,
            "target": target,
        }
    world.__post_init__()
    return world
