"""Classify failing build/run logs and pull out what the repair step needs."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

from .errors import BackendError, MalformedReplyError
from .models import BuildOutcome

if TYPE_CHECKING:
    from .llm.gateway import ModelGateway

log = logging.getLogger(__name__)

CONTEXT_LINES = 5


class ErrorClass(str, enum.Enum):
    SyntaxError = "SyntaxError"
    VersionNotFound = "VersionNotFound"
    InvalidVersion = "InvalidVersion"
    DependencyConflict = "DependencyConflict"
    ModuleNotFound = "ModuleNotFound"
    ImportError = "ImportError"
    AttributeError = "AttributeError"
    NonZeroCode = "NonZeroCode"

    def __str__(self) -> str:
        return self.value


# Highest precedence first.
PRECEDENCE: tuple[ErrorClass, ...] = tuple(ErrorClass)

# Runtime failures that disqualify a run from counting as fixed.
CRITICAL = frozenset({ErrorClass.ImportError, ErrorClass.ModuleNotFound,
                      ErrorClass.AttributeError, ErrorClass.SyntaxError})

REQUIRED_FIELDS: dict[ErrorClass, tuple[str, ...]] = {
    ErrorClass.SyntaxError: (),
    ErrorClass.VersionNotFound: ("module", "requested_version"),
    ErrorClass.InvalidVersion: ("module", "requested_version"),
    ErrorClass.DependencyConflict: ("conflicting_modules",),
    ErrorClass.ModuleNotFound: ("module",),
    ErrorClass.ImportError: ("module",),
    ErrorClass.AttributeError: ("module", "attribute"),
    ErrorClass.NonZeroCode: ("exit_code",),
}

_SIGNATURES: dict[ErrorClass, re.Pattern[str]] = {
    ErrorClass.SyntaxError: re.compile(r"^\s*(?:\w+\.)*(?:SyntaxError|IndentationError|TabError)\b"),
    ErrorClass.VersionNotFound: re.compile(
        r"Could not find a version that satisfies the requirement|No matching distribution found for"),
    ErrorClass.InvalidVersion: re.compile(
        r"Invalid requirement:|InvalidVersion\b|Invalid version:|is not a valid version|"
        r"Expected end or semicolon"),
    ErrorClass.DependencyConflict: re.compile(
        r"ResolutionImpossible|conflicting dependencies|has requirement .+, but you(?:'ll| will)? have|"
        r"requires .+, but you have .+ which is incompatible|VersionConflict\b|ContextualVersionConflict"),
    ErrorClass.ModuleNotFound: re.compile(r"ModuleNotFoundError:|No module named"),
    ErrorClass.ImportError: re.compile(r"^\s*(?:\w+\.)*ImportError\b(?!.*No module named)|cannot import name"),
    ErrorClass.AttributeError: re.compile(r"^\s*(?:\w+\.)*AttributeError\b"),
    ErrorClass.NonZeroCode: re.compile(
        r"returned a non-zero code|did not complete successfully|exit code:?\s*\d+|exited with (?:code|status)"),
}


@dataclass(frozen=True)
class TriageReport:
    primary_class: ErrorClass
    payload: dict[str, str] = field(default_factory=dict)
    matched_excerpt: str = ""
    used_llm_extraction: bool = False
    classes_found: tuple[ErrorClass, ...] = ()

    def summary(self) -> dict:
        return {"class": self.primary_class.value, "payload": dict(self.payload),
                "llm": self.used_llm_extraction}


def first_match(lines: list[str], cls: ErrorClass) -> int | None:
    sig = _SIGNATURES[cls]
    for i, line in enumerate(lines):
        if sig.search(line):
            return i
    return None


def classes_in(text: str) -> list[ErrorClass]:
    lines = text.splitlines()
    return [c for c in PRECEDENCE if first_match(lines, c) is not None]


def critical_classes_in(text: str) -> set[ErrorClass]:
    return set(classes_in(text)) & CRITICAL


def _slice(lines: list[str], index: int | None) -> list[str]:
    if index is None:
        return lines[-(2 * CONTEXT_LINES + 1):]
    return lines[max(0, index - CONTEXT_LINES): index + CONTEXT_LINES + 1]


def excerpt_for_prompt(outcome: BuildOutcome, cls: ErrorClass) -> str:
    """The first signature line of ``cls`` with up to five lines either side.

    Without a signature line, the tail of the log of the same size.
    """
    lines = outcome.log.splitlines()
    return "\n".join(_slice(lines, first_match(lines, cls)))


# -- payload extraction ------------------------------------------------------

_REQ = r"([A-Za-z0-9][A-Za-z0-9._-]*)(?:\[[^\]]*\])?\s*==\s*([^\s'\"(),;]+)"


def _top(name: str) -> str:
    return name.split(".")[0]


def _version_not_found(text: str) -> dict[str, str]:
    for pattern in (r"satisfies the requirement " + _REQ, r"No matching distribution found for " + _REQ, _REQ):
        m = re.search(pattern, text)
        if m:
            return {"module": m.group(1), "requested_version": m.group(2)}
    return {}


def _invalid_version(text: str) -> dict[str, str]:
    m = re.search(r"Invalid requirement: ['\"]?" + _REQ, text)
    if m:
        return {"module": m.group(1), "requested_version": m.group(2)}
    # Every quoted candidate is tried: tracebacks may quote pip's own source first.
    for bad in re.finditer(r"Invalid version: ['\"]([^'\"]+)['\"]|['\"]([^'\"]+)['\"] is not a valid version", text):
        version = bad.group(1) or bad.group(2)
        m = re.search(r"([A-Za-z0-9][A-Za-z0-9._-]*)\s*==\s*" + re.escape(version) + r"(?![\w.])", text)
        if m:
            return {"module": m.group(1), "requested_version": version}
    return {}


def _conflict(text: str) -> dict[str, str]:
    names: list[str] = []
    m = re.search(r"Cannot install (.+?) because these package versions have conflicting dependencies", text)
    if m:
        names += re.findall(r"([A-Za-z0-9][A-Za-z0-9._-]*)==", m.group(1))
    names += re.findall(r"^\s*([A-Za-z0-9][A-Za-z0-9._-]*) \S+ depends on", text, re.M)
    m = re.search(r"([A-Za-z0-9][A-Za-z0-9._-]*) \S+ has requirement ([A-Za-z0-9][A-Za-z0-9._-]*)", text)
    if m:
        names += [m.group(1), m.group(2)]
    m = re.search(r"([A-Za-z0-9][A-Za-z0-9._-]*) \S+ requires ([A-Za-z0-9][A-Za-z0-9._-]*)\W.*but you have", text)
    if m:
        names += [m.group(1), m.group(2)]
    m = re.search(r"VersionConflict: \(([A-Za-z0-9][\w.-]*) [^,]+, Requirement\.parse\('([A-Za-z0-9][\w.-]*)[^)]*\)"
                  r"(?:, \{([^}]*)\})?", text)
    if m:
        names += [m.group(1), m.group(2)] + re.findall(r"'([A-Za-z0-9][\w.-]*)'", m.group(3) or "")
    unique = list(dict.fromkeys(names))
    return {"conflicting_modules": ",".join(unique)} if unique else {}


def _traceback_module(text: str) -> str | None:
    """Innermost module a traceback points at: the last ``from x import`` line or installed-package path."""
    hits = [(m.start(), _top(m.group(1))) for m in re.finditer(r"^\s*from ([\w.]+) import ", text, re.M)]
    hits += [(m.start(), m.group(1)) for m in re.finditer(r"(?:site|dist)-packages/([A-Za-z_]\w*)", text)]
    return max(hits)[1] if hits else None


def _module_not_found(text: str) -> dict[str, str]:
    m = re.search(r"No module named ['\"]?([\w.]+)['\"]?", text)
    return {"module": _top(m.group(1))} if m else {}


def _import_error(text: str) -> dict[str, str]:
    m = re.search(r"cannot import name ['\"]?\w+['\"]? from ['\"]?([\w.]+)['\"]?", text)
    if m:
        return {"module": _top(m.group(1))}
    found = _traceback_module(text)
    return {"module": found} if found else {}


def _attribute_error(text: str) -> dict[str, str]:
    m = re.search(r"module ['\"]([\w.]+)['\"] has no attribute ['\"](\w+)['\"]", text)
    if m:
        return {"module": _top(m.group(1)), "attribute": m.group(2)}
    m = re.search(r"AttributeError: .*has no attribute ['\"](\w+)['\"]", text)
    if not m:
        return {}
    attribute = m.group(1)
    user = re.search(r"\b([A-Za-z_]\w*)(?:\.\w+)*\." + re.escape(attribute) + r"\b", text)
    module = _traceback_module(text) or (user.group(1) if user else None)
    return {"module": module, "attribute": attribute} if module else {"attribute": attribute}


def _syntax(text: str) -> dict[str, str]:
    hits = re.findall(r"line (\d+)", text)
    return {"line_number": hits[-1]} if hits else {}


def _exit_code(text: str, outcome: BuildOutcome) -> dict[str, str]:
    m = re.search(r"returned a non-zero code: (\d+)|exit code:?\s*(\d+)|exited with (?:code|status) (\d+)", text)
    code = next((g for g in m.groups() if g), None) if m else None
    if code is None:
        code = str(outcome.exit_code) if outcome.exit_code is not None else outcome.status
    payload = {"exit_code": code}
    pip = re.search(r'"pip","install"[^\]]*"' + _REQ + '"', text) or re.search(r"pip install .*?" + _REQ, text)
    if pip:
        payload["module"] = pip.group(1)
    return payload


_EXTRACTORS: dict[ErrorClass, Callable[[str], dict[str, str]]] = {
    ErrorClass.SyntaxError: _syntax,
    ErrorClass.VersionNotFound: _version_not_found,
    ErrorClass.InvalidVersion: _invalid_version,
    ErrorClass.DependencyConflict: _conflict,
    ErrorClass.ModuleNotFound: _module_not_found,
    ErrorClass.ImportError: _import_error,
    ErrorClass.AttributeError: _attribute_error,
}


def payload_complete(cls: ErrorClass, payload: dict[str, str]) -> bool:
    return all(payload.get(k) for k in REQUIRED_FIELDS[cls])


def classify(outcome: BuildOutcome, gateway: ModelGateway | None = None) -> TriageReport:
    """Primary class by precedence, payload by pattern, model extraction as fallback."""
    if outcome.status == "success":
        raise ValueError("classify expects a failed outcome")
    found = classes_in(outcome.log)
    cls = found[0] if found else ErrorClass.NonZeroCode
    excerpt = excerpt_for_prompt(outcome, cls)
    if cls is ErrorClass.NonZeroCode:
        return TriageReport(cls, _exit_code(outcome.log, outcome), excerpt, False, tuple(found))

    # Payloads are searched in the excerpt first, then in the whole log.
    payload = _EXTRACTORS[cls](excerpt)
    if not payload_complete(cls, payload):
        payload = {**_EXTRACTORS[cls](outcome.log), **{k: v for k, v in payload.items() if v}}
    used_llm = False
    if not payload_complete(cls, payload) and gateway is not None:
        try:
            extracted = gateway.extract_error_payload(cls.value, excerpt)
        except (MalformedReplyError, BackendError) as exc:
            log.info("model extraction failed for %s: %s", cls.value, exc)
        else:
            payload = _normalize_llm_payload(cls, {**payload, **extracted})
            used_llm = True
    return TriageReport(cls, payload, excerpt, used_llm, tuple(found))


def _normalize_llm_payload(cls: ErrorClass, payload: dict[str, str]) -> dict[str, str]:
    out = dict(payload)
    if "module" in out:
        out["module"] = _top(out["module"].strip())
    return out
