from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from envrepair.llm.gateway import ModelGateway
from envrepair.llm.stubs import ScriptedStub
from envrepair.models import BuildOutcome
from envrepair.triage import (PRECEDENCE, ErrorClass, classify, critical_classes_in, excerpt_for_prompt,
                              payload_complete)

from conftest import LOG_CORPUS, failed_build, failed_run


def load_labeled(path: Path) -> tuple[dict, str]:
    header, body = path.read_text("utf-8").split("\n", 1)
    assert header.startswith("# ")
    return json.loads(header[2:]), body


CORPUS = sorted(LOG_CORPUS.glob("*.log"))


def test_corpus_size_and_balance():
    counts = Counter(load_labeled(p)[0]["class"] for p in CORPUS)
    assert len(CORPUS) >= 40
    assert set(counts) == {c.value for c in ErrorClass}
    assert min(counts.values()) >= 5


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
def test_corpus_entry(path):
    label, body = load_labeled(path)
    rep = classify(failed_build(body), gateway=None)
    assert rep.primary_class.value == label["class"]
    for key, value in label["payload"].items():
        assert rep.payload.get(key) == value, key
    assert payload_complete(rep.primary_class, rep.payload)
    assert not rep.used_llm_extraction
    assert len(rep.matched_excerpt.splitlines()) <= 40


# -- examples ----------------------------------------------------------------------

def test_version_not_found_example():
    rep = classify(failed_build("ERROR: Could not find a version that satisfies the requirement tensorflow==9.9.9"))
    assert rep.primary_class is ErrorClass.VersionNotFound
    assert rep.payload == {"module": "tensorflow", "requested_version": "9.9.9"}


def test_import_error_example():
    rep = classify(failed_run("ImportError: cannot import name 'X' from 'bs4'"))
    assert rep.primary_class is ErrorClass.ImportError and rep.payload == {"module": "bs4"}


def test_empty_failed_log():
    rep = classify(BuildOutcome("run", "failure", 3, "", 0.1, "k"))
    assert rep.primary_class is ErrorClass.NonZeroCode and rep.payload == {"exit_code": "3"}


def test_timeout_without_code():
    rep = classify(BuildOutcome("run", "timeout", None, "", 120.0, "k"))
    assert rep.primary_class is ErrorClass.NonZeroCode and rep.payload == {"exit_code": "timeout"}


def test_success_rejected():
    with pytest.raises(ValueError):
        classify(BuildOutcome("run", "success", 0, "", 0.1, "k"))


def test_precedence_order():
    assert [c.value for c in PRECEDENCE] == ["SyntaxError", "VersionNotFound", "InvalidVersion",
                                             "DependencyConflict", "ModuleNotFound", "ImportError",
                                             "AttributeError", "NonZeroCode"]


def test_syntax_dominates_runtime_errors():
    log = "ImportError: cannot import name 'a' from 'b'\n  File \"x.py\", line 2\nSyntaxError: invalid syntax\n"
    assert classify(failed_run(log)).primary_class is ErrorClass.SyntaxError


def test_install_error_dominates_exit_code():
    log = "ERROR: No matching distribution found for a==1\nThe command returned a non-zero code: 1"
    rep = classify(failed_build(log))
    assert rep.primary_class is ErrorClass.VersionNotFound
    assert set(rep.classes_found) == {ErrorClass.VersionNotFound, ErrorClass.NonZeroCode}


def test_no_module_named_is_module_not_found_in_both_wordings():
    for log in ("ModuleNotFoundError: No module named 'a.b'", "ImportError: No module named a.b"):
        rep = classify(failed_run(log))
        assert rep.primary_class is ErrorClass.ModuleNotFound and rep.payload == {"module": "a"}


def test_critical_classes():
    assert critical_classes_in("ValueError: x\nexit code: 1") == set()
    assert critical_classes_in("AttributeError: module 'a' has no attribute 'b'") == {ErrorClass.AttributeError}


# -- excerpts -------------------------------------------------------------------------

def test_excerpt_long_log():
    lines = [f"noise line {i}" for i in range(2000)]
    lines[1234] = "ImportError: cannot import name 'q' from 'z'"
    out = excerpt_for_prompt(failed_run("\n".join(lines)), ErrorClass.ImportError).splitlines()
    assert len(out) <= 11 and lines[1234] in out
    assert out == lines[1229:1240]


def test_excerpt_short_log():
    log = "a\nImportError: cannot import name 'q' from 'z'\nc"
    assert excerpt_for_prompt(failed_run(log), ErrorClass.ImportError) == log


def test_excerpt_first_occurrence():
    lines = ["x"] * 100
    lines[10] = "ImportError: cannot import name 'first' from 'a'"
    lines[80] = "ImportError: cannot import name 'second' from 'b'"
    out = excerpt_for_prompt(failed_run("\n".join(lines)), ErrorClass.ImportError)
    assert "first" in out and "second" not in out


def test_excerpt_without_signature_is_tail():
    lines = [str(i) for i in range(50)]
    out = excerpt_for_prompt(failed_run("\n".join(lines)), ErrorClass.ImportError).splitlines()
    assert out == lines[-11:]


# -- model fallback ---------------------------------------------------------------------

def test_model_fallback_when_patterns_fail():
    log = "ImportError: something odd happened"
    stub = ScriptedStub({"extract_import_error": ['{"module": "weird.sub"}']})
    rep = classify(failed_run(log), ModelGateway(stub))
    assert rep.used_llm_extraction and rep.payload == {"module": "weird"}
    assert stub.calls["extract_import_error"] == 1


def test_model_not_asked_when_patterns_succeed():
    stub = ScriptedStub({})
    rep = classify(failed_run("ModuleNotFoundError: No module named 'x'"), ModelGateway(stub))
    assert not rep.used_llm_extraction and stub.total_calls == 0


def test_model_failure_tolerated():
    stub = ScriptedStub({"extract_import_error": ["nope"]})
    rep = classify(failed_run("ImportError: something odd happened"), ModelGateway(stub))
    assert rep.primary_class is ErrorClass.ImportError and not rep.used_llm_extraction


def test_nonzero_names_failing_install():
    log = 'Step 4/6 : RUN ["pip","install","--default-timeout=100","lxml==3.4.0"]\nerror: gcc failed\n' \
          "The command 'pip install lxml==3.4.0' returned a non-zero code: 1"
    rep = classify(failed_build(log))
    assert rep.payload == {"exit_code": "1", "module": "lxml"}


# -- properties ---------------------------------------------------------------------------

_fragments = st.sampled_from([
    "Traceback (most recent call last):", "ModuleNotFoundError: No module named 'abc'",
    "ImportError: cannot import name 'x' from 'y'", "AttributeError: module 'm' has no attribute 'n'",
    "SyntaxError: invalid syntax", "ERROR: No matching distribution found for p==1",
    "ERROR: Invalid requirement: 'p==x'", "ERROR: ResolutionImpossible", "returned a non-zero code: 2",
    "random noise", "", "  File \"/app/snippet.py\", line 7",
])


@given(st.lists(_fragments, max_size=200), st.integers(0, 255))
def test_exactly_one_class_and_bounded_excerpt(parts, code):
    out = BuildOutcome("run", "failure", code, "\n".join(parts), 0.1, "k")
    first = classify(out)
    assert first.primary_class in ErrorClass
    assert len(first.matched_excerpt.splitlines()) <= 40
    assert classify(out) == first
    if first.classes_found:
        assert first.primary_class is first.classes_found[0]
