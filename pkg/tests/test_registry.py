from __future__ import annotations

import json
import random
from datetime import timedelta

import pytest
import requests
from hypothesis import given
from hypothesis import strategies as st

from envrepair.errors import RegistryUnavailable, UnknownPackage
from envrepair.interpreters import InterpreterVersion, InterpreterWindow, normalize_series, window_for
from envrepair.registry import (FixtureSource, PyPISource, ReleaseRecord, Retriever, VersionCatalog,
                                catalog_from_document, filter_for_interpreter, order_releases, requires_satisfied,
                                to_prompt_text, version_key)
from envrepair.world import index_document

from conftest import NOW, utc

PY36 = InterpreterVersion("3.6")


def catalog(*records: ReleaseRecord) -> VersionCatalog:
    return VersionCatalog("pkg", tuple(records))


class CountingSource:
    def __init__(self, docs):
        self.docs = docs
        self.calls = 0

    def get_document(self, name):
        self.calls += 1
        if name not in self.docs:
            raise UnknownPackage(name)
        return self.docs[name]


# -- interpreters ----------------------------------------------------------------

@pytest.mark.parametrize("text, series, warned", [
    ("2", "2.7", False), ("3", "3.6", False), ("3.7", "3.7", False), ("Python 3.8.10", "3.8", False),
    (">=3.9", "3.9", False), ("3.13", "3.12", True), ("2.6", "2.7", True), ("3.1", "3.4", True),
    ("latest", "3.6", True), ("", "3.6", True), ("4.0", "3.6", True),
])
def test_normalize_series(text, series, warned):
    got, warning = normalize_series(text)
    assert got.series == series
    assert (warning is not None) == warned


def test_window_for_36():
    w = window_for(PY36, NOW)
    assert (w.window_start, w.window_end) == (utc("2016-12-23"), utc("2021-12-23"))


def test_window_end_clipped_to_now():
    w = window_for(InterpreterVersion("3.12"), utc("2024-01-01"))
    assert w.window_end == utc("2024-01-01")


def test_window_ordering_enforced():
    with pytest.raises(ValueError):
        InterpreterWindow(PY36, utc("2020-01-01"), utc("2019-01-01"))


def test_interpreter_ordering():
    assert InterpreterVersion("2.7") < InterpreterVersion("3.4") < InterpreterVersion("3.10")


# -- filtering ---------------------------------------------------------------------

def test_window_example():
    c = catalog(ReleaseRecord("1.0", utc("2015-05-01")), ReleaseRecord("2.0", utc("2018-05-01")),
                ReleaseRecord("3.0", utc("2023-05-01")))
    assert filter_for_interpreter(c, window_for(PY36, NOW)).versions == ["2.0"]


def test_fallback_to_latest():
    c = catalog(ReleaseRecord("1.0", utc("2010-01-01")), ReleaseRecord("3.0", utc("2023-05-01")))
    assert filter_for_interpreter(c, window_for(PY36, NOW)).versions == ["3.0"]


def test_requires_python_excluded():
    c = catalog(ReleaseRecord("1.0", utc("2018-01-01")), ReleaseRecord("2.0", utc("2019-01-01"), ">=3.7"))
    assert filter_for_interpreter(c, window_for(PY36, NOW)).versions == ["1.0"]


def test_yanked_excluded():
    c = catalog(ReleaseRecord("1.0", utc("2018-01-01")), ReleaseRecord("1.1", utc("2018-02-01"), yanked=True))
    assert filter_for_interpreter(c, window_for(PY36, NOW)).versions == ["1.0"]


def test_undated_release_kept_when_supported():
    c = catalog(ReleaseRecord("0.9"), ReleaseRecord("1.0", utc("2030-01-01")))
    assert filter_for_interpreter(c, window_for(PY36, NOW)).versions == ["0.9"]


def test_empty_catalog_rejected():
    with pytest.raises(ValueError):
        filter_for_interpreter(catalog(), window_for(PY36, NOW))


@pytest.mark.parametrize("constraint, version, ok", [
    (None, "3.6.15", True), ("", "3.6.15", True), (">=3.6", "3.6.15", True), (">=3.7", "3.6.15", False),
    ("<3.7,>=3.5", "3.6.15", True), ("!=3.6.*", "3.6.15", False), ("~=3.5", "3.6.15", True),
    ("~=3.7.0", "3.6.15", False), ("==3.6.*", "3.6.15", True), (">2.7, <3", "2.7.18", True),
    (">3.6.15", "3.6.15", False), ("<=3.6", "3.6.15", False), ("nonsense", "3.6.15", True),
])
def test_requires_grammar(constraint, version, ok):
    assert requires_satisfied(constraint, version) is ok


def test_filter_is_subset_or_latest():
    rng = random.Random(3)
    for _ in range(200):
        recs = [ReleaseRecord(f"1.{i}", utc("2012-01-01") + timedelta(days=rng.randrange(4000)))
                for i in range(rng.randrange(1, 12))]
        c = VersionCatalog("p", tuple(order_releases(recs)))
        out = filter_for_interpreter(c, window_for(PY36, NOW))
        assert out.releases
        assert set(out.versions) <= set(c.versions)


# -- ordering ----------------------------------------------------------------------

def test_shuffled_fixture_sorted():
    releases = [(f"{i // 10}.{i % 10}", utc("2014-01-01") + timedelta(days=30 * i), None) for i in range(40)]
    shuffled = releases[:]
    random.Random(5).shuffle(shuffled)
    c = catalog_from_document("p", index_document("p", shuffled))
    assert c.versions == [v for v, _, _ in sorted(releases, key=lambda r: r[1])]


def test_undated_ordering_uses_version_rules():
    recs = [ReleaseRecord(v) for v in ["1.10", "1.2", "1.2rc1", "1.0.post1", "1.0"]]
    assert [r.version for r in order_releases(recs)] == ["1.0", "1.0.post1", "1.2rc1", "1.2", "1.10"]


def test_mixed_dates_fall_back_to_version_order():
    recs = [ReleaseRecord("2.0", utc("2015-01-01")), ReleaseRecord("1.0")]
    assert [r.version for r in order_releases(recs)] == ["1.0", "2.0"]


def test_same_day_ties_broken_by_version():
    d = utc("2019-01-01")
    assert [r.version for r in order_releases([ReleaseRecord("1.1", d), ReleaseRecord("1.0", d)])] == ["1.0", "1.1"]


def test_unparseable_versions_sort_first():
    assert version_key("banana") < version_key("0.0.1")


def test_duplicates_collapsed():
    assert len(order_releases([ReleaseRecord("1.0"), ReleaseRecord("1.0")])) == 1


def test_document_parsing_details():
    doc = {"releases": {
        "1.0": [{"upload_time_iso_8601": "2018-01-02T00:00:00Z", "requires_python": ">=3.5"},
                {"upload_time_iso_8601": "2018-01-01T00:00:00Z"}],
        "1.1": [{"upload_time": "2018-03-01T00:00:00", "yanked": True}],
        "0.5": [],
    }}
    c = catalog_from_document("p", doc)
    by = {r.version: r for r in c.releases}
    assert by["1.0"].released_at == utc("2018-01-01") and by["1.0"].requires_interpreter == ">=3.5"
    assert by["1.1"].yanked and not by["0.5"].yanked and by["0.5"].released_at is None
    assert c.latest().version == "1.0"


# -- prompt text ---------------------------------------------------------------------

def test_prompt_text_small():
    assert to_prompt_text(catalog(*(ReleaseRecord(v) for v in ["1.0", "1.1", "2.0"]))) == "1.0,1.1,2.0"
    assert to_prompt_text(catalog(ReleaseRecord("2.4.4"))) == "2.4.4"


def test_prompt_text_hundred_releases():
    text = to_prompt_text(catalog(*(ReleaseRecord(f"0.{i}") for i in range(100))))
    assert text.count(",") == 99


@given(st.lists(st.from_regex(r"[0-9]{1,2}(\.[0-9]{1,2}){0,2}", fullmatch=True), min_size=1, max_size=50, unique=True))
def test_prompt_text_round_trip(versions):
    c = catalog(*(ReleaseRecord(v) for v in versions))
    assert to_prompt_text(c).split(",") == c.versions


# -- sources and cache ------------------------------------------------------------------

def test_cache_single_request():
    src = CountingSource({"p": index_document("p", [("1.0", utc("2018-01-01"), None)])})
    r = Retriever(src)
    assert r.fetch_catalog("p") == r.fetch_catalog("p")
    assert src.calls == 1 and r.requests_made == 1


def test_cache_persists_on_disk(tmp_path):
    src = CountingSource({"p": index_document("p", [("1.0", None, None)])})
    Retriever(src, cache_dir=tmp_path).fetch_catalog("p")
    again = Retriever(src, cache_dir=tmp_path).fetch_catalog("p")
    assert again.versions == ["1.0"] and src.calls == 1


def test_cache_expiry(tmp_path):
    src = CountingSource({"p": index_document("p", [("1.0", None, None)])})
    r = Retriever(src, cache_dir=tmp_path, ttl_seconds=0)
    r.fetch_catalog("p")
    r.fetch_catalog("p")
    assert src.calls == 2


def test_cache_key_normalized():
    src = CountingSource({"Foo_Bar": index_document("Foo_Bar", [("1.0", None, None)])})
    r = Retriever(src)
    r.fetch_catalog("Foo_Bar")
    r.fetch_catalog("foo-bar")
    assert src.calls == 1


def test_invalid_name_is_unknown():
    with pytest.raises(UnknownPackage):
        Retriever(CountingSource({})).fetch_catalog("../etc/passwd")


def test_fixture_source(tmp_path):
    (tmp_path / "scikit-learn.json").write_text(json.dumps(index_document("scikit-learn", [("0.1", None, None)])))
    src = FixtureSource(tmp_path)
    assert Retriever(src).fetch_catalog("scikit_learn").versions == ["0.1"]
    with pytest.raises(UnknownPackage):
        src.get_document("thispackagedoesnotexist-xyz")


class _Resp:
    def __init__(self, code, body=None):
        self.status_code, self.body = code, body

    def json(self):
        if self.body is None:
            raise ValueError("no json")
        return self.body


class _Session:
    def __init__(self, resp):
        self.resp, self.headers, self.urls = resp, {}, []

    def get(self, url, timeout=None):
        self.urls.append(url)
        if isinstance(self.resp, Exception):
            raise self.resp
        return self.resp


def test_pypi_source_ok():
    s = _Session(_Resp(200, {"releases": {"1.0": []}}))
    assert PyPISource("https://pypi.example/", session=s).get_document("pkg") == {"releases": {"1.0": []}}
    assert s.urls == ["https://pypi.example/pypi/pkg/json"]


@pytest.mark.parametrize("resp, exc", [
    (_Resp(404), UnknownPackage), (_Resp(503), RegistryUnavailable), (_Resp(200), RegistryUnavailable),
    (requests.ConnectionError("x"), RegistryUnavailable),
])
def test_pypi_source_errors(resp, exc):
    with pytest.raises(exc):
        PyPISource(session=_Session(resp)).get_document("thispackagedoesnotexist-xyz")


def _pypi_reachable() -> bool:
    try:
        return requests.head("https://pypi.org/pypi/pip/json", timeout=3).ok
    except requests.RequestException:
        return False


@pytest.mark.live
def test_live_pypi(tmp_path):
    if not _pypi_reachable():
        pytest.skip("registry not reachable")
    r = Retriever(PyPISource(), cache_dir=tmp_path)
    c = r.fetch_catalog("scikit-learn")
    assert c.releases
    dated = [x.released_at for x in c.releases if x.released_at]
    assert dated == sorted(dated)
    with pytest.raises(UnknownPackage):
        r.fetch_catalog("thispackagedoesnotexist-xyz")
