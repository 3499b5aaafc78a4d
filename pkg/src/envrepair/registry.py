"""Release metadata retrieval, caching and per-interpreter filtering.

Sources return documents shaped like the package index JSON API
(``GET <base>/pypi/<name>/json``)::

    {"info": {"name": ..., "requires_python": ...},
     "releases": {"1.0": [{"upload_time_iso_8601": ..., "requires_python": ..., "yanked": false}, ...]}}

Cache layout: ``<cache_dir>/<sha256(normalized name)>.json`` holding
``{"fetched_at": <epoch seconds>, "document": <the document above>}``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

import requests
from packaging.specifiers import InvalidSpecifier, SpecifierSet
from packaging.version import InvalidVersion, Version

from .errors import RegistryUnavailable, UnknownPackage
from .interpreters import InterpreterWindow

log = logging.getLogger(__name__)

CACHE_DIR_ENV = "ENVREPAIR_CACHE_DIR"
DEFAULT_TTL_SECONDS = 24 * 3600
PYPI_URL = "https://pypi.org"

_NAME_RE = re.compile(r"^([A-Z0-9]|[A-Z0-9][A-Z0-9._-]*[A-Z0-9])$", re.IGNORECASE)


def normalize_name(name: str) -> str:
    return re.sub(r"[-_.]+", "-", name).lower()


def valid_package_name(name: str) -> bool:
    return bool(_NAME_RE.match(name))


@dataclass(frozen=True)
class ReleaseRecord:
    version: str
    released_at: datetime | None = None
    requires_interpreter: str | None = None
    yanked: bool = False

    def __post_init__(self) -> None:
        if not self.version:
            raise ValueError("release version must be non-empty")


@dataclass(frozen=True)
class VersionCatalog:
    install_name: str
    releases: tuple[ReleaseRecord, ...]
    fetched_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc), compare=False)

    @property
    def versions(self) -> list[str]:
        return [r.version for r in self.releases]

    def latest(self) -> ReleaseRecord | None:
        live = [r for r in self.releases if not r.yanked]
        return live[-1] if live else None


def version_key(text: str) -> tuple:
    """Sort key under the standard version rules; unparseable strings sort first, lexically."""
    try:
        return (1, Version(text), "")
    except InvalidVersion:
        return (0, Version("0"), text)


def order_releases(records: list[ReleaseRecord]) -> list[ReleaseRecord]:
    """Oldest to newest, one record per version string.

    Upload dates decide the order when every record has one; otherwise the
    version ordering does (it already puts pre-releases before finals).
    """
    unique: dict[str, ReleaseRecord] = {}
    for r in records:
        unique.setdefault(r.version, r)
    items = list(unique.values())
    if items and all(r.released_at is not None for r in items):
        return sorted(items, key=lambda r: (r.released_at, version_key(r.version)))
    return sorted(items, key=lambda r: version_key(r.version))


def _parse_time(text: str | None) -> datetime | None:
    if not text:
        return None
    try:
        moment = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        return None
    return moment if moment.tzinfo else moment.replace(tzinfo=timezone.utc)


def catalog_from_document(install_name: str, doc: dict, fetched_at: datetime | None = None) -> VersionCatalog:
    records = []
    for version, files in (doc.get("releases") or {}).items():
        files = files or []
        times = [t for t in (_parse_time(f.get("upload_time_iso_8601") or f.get("upload_time")) for f in files) if t]
        requires = next((f.get("requires_python") for f in files if f.get("requires_python")), None)
        yanked = bool(files) and all(f.get("yanked", False) for f in files)
        records.append(ReleaseRecord(version, min(times) if times else None, requires, yanked))
    return VersionCatalog(install_name, tuple(order_releases(records)), fetched_at or datetime.now(timezone.utc))


class RegistrySource(Protocol):
    def get_document(self, install_name: str) -> dict: ...


class PyPISource:
    def __init__(self, base_url: str = PYPI_URL, timeout: float = 30.0, session: requests.Session | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.session.headers.setdefault("User-Agent", "envrepair/0.1")

    def get_document(self, install_name: str) -> dict:
        url = f"{self.base_url}/pypi/{install_name}/json"
        try:
            resp = self.session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise RegistryUnavailable(f"{url}: {exc}") from exc
        if resp.status_code == 404:
            raise UnknownPackage(install_name)
        if resp.status_code != 200:
            raise RegistryUnavailable(f"{url}: HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise RegistryUnavailable(f"{url}: invalid JSON") from exc


class FixtureSource:
    """Per-package documents in a directory, ``<normalized name>.json``."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)

    def get_document(self, install_name: str) -> dict:
        path = self.directory / f"{normalize_name(install_name)}.json"
        if not path.is_file():
            raise UnknownPackage(install_name)
        return json.loads(path.read_text("utf-8"))


class Retriever:
    """Fetches catalogs through a TTL cache, one in-flight request per package."""

    def __init__(self, source: RegistrySource, cache_dir: str | Path | None = None,
                 ttl_seconds: float = DEFAULT_TTL_SECONDS) -> None:
        self.source = source
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.ttl_seconds = ttl_seconds
        self.requests_made = 0
        self._memory: dict[str, tuple[float, dict]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock_for(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{hashlib.sha256(key.encode()).hexdigest()}.json"

    def _fresh(self, fetched: float) -> bool:
        return time.time() - fetched < self.ttl_seconds

    def _cached(self, key: str) -> tuple[float, dict] | None:
        hit = self._memory.get(key)
        if hit and self._fresh(hit[0]):
            return hit
        path = self._cache_path(key)
        if path is not None and path.is_file():
            try:
                blob = json.loads(path.read_text("utf-8"))
                entry = (float(blob["fetched_at"]), blob["document"])
            except (ValueError, KeyError):
                return None
            if self._fresh(entry[0]):
                self._memory[key] = entry
                return entry
        return None

    def _store(self, key: str, entry: tuple[float, dict]) -> None:
        self._memory[key] = entry
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump({"fetched_at": entry[0], "document": entry[1]}, fh)
        os.replace(tmp, path)

    def fetch_catalog(self, install_name: str) -> VersionCatalog:
        if not valid_package_name(install_name):
            raise UnknownPackage(install_name)
        key = normalize_name(install_name)
        entry = self._cached(key)
        if entry is None:
            with self._lock_for(key):
                entry = self._cached(key)
                if entry is None:
                    with self._guard:
                        self.requests_made += 1
                    doc = self.source.get_document(install_name)
                    entry = (time.time(), doc)
                    self._store(key, entry)
        fetched_at = datetime.fromtimestamp(entry[0], timezone.utc)
        return catalog_from_document(install_name, entry[1], fetched_at)


def requires_satisfied(constraint: str | None, full_version: str) -> bool:
    """Whether an interpreter version meets a declared ``requires_python``.

    Malformed constraints are treated as absent, as installers do.
    """
    if not constraint or not constraint.strip():
        return True
    try:
        spec = SpecifierSet(constraint.strip())
    except InvalidSpecifier:
        return True
    return spec.contains(full_version, prereleases=True)


def filter_for_interpreter(catalog: VersionCatalog, window: InterpreterWindow) -> VersionCatalog:
    """Releases plausible for the window's interpreter, or just the latest release if none are."""
    if not catalog.releases:
        raise ValueError(f"catalog for {catalog.install_name} is empty")
    full = window.interpreter.patch_release
    kept = tuple(
        r for r in catalog.releases
        if (r.released_at is None or window.contains(r.released_at))
        and requires_satisfied(r.requires_interpreter, full)
        and not r.yanked
    )
    if not kept:
        latest = catalog.latest() or catalog.releases[-1]
        kept = (latest,)
    return VersionCatalog(catalog.install_name, kept, catalog.fetched_at)


def to_prompt_text(catalog: VersionCatalog) -> str:
    if not catalog.releases:
        raise ValueError(f"catalog for {catalog.install_name} is empty; apply the fallback first")
    return ",".join(r.version for r in catalog.releases)
