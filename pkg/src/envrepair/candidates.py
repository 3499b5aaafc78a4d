"""Turning requirements into pinned candidates, and editing them after a failure."""

from __future__ import annotations

import logging
import threading
from datetime import datetime
from typing import Sequence

from .errors import CandidateSpaceExhausted, MalformedReplyError, UnknownPackage, VersionsExhausted
from .inspector import NameMapping, is_stdlib
from .interpreters import PY3_SERIES, InterpreterVersion, window_for
from .llm.gateway import ModelGateway
from .models import AttemptHistory, EnvironmentCandidate, ModuleRequirement
from .registry import Retriever, filter_for_interpreter, normalize_name, to_prompt_text
from .triage import ErrorClass, TriageReport

log = logging.getLogger(__name__)

MAX_RANGE = 3
# Re-picks allowed when a freshly built key collides with one already tried.
MAX_COLLISION_RETRIES = 25


def expand_interpreters(predicted: InterpreterVersion, range_: int) -> list[InterpreterVersion]:
    """Predicted series plus ``range_`` neighbours each side within 3.x, with 2.7 always in.

    A 2.7 prediction anchors the 3.x band at the oldest supported 3.x series,
    one step narrower: ``range_`` series starting from there.
    """
    if not 0 <= range_ <= MAX_RANGE:
        raise ValueError(f"range must lie in 0..{MAX_RANGE}, got {range_}")
    if not isinstance(predicted, InterpreterVersion):
        predicted = InterpreterVersion(str(predicted))
    if predicted.series == "2.7":
        band = list(PY3_SERIES[:range_])
    else:
        i = PY3_SERIES.index(predicted.series)
        band = list(PY3_SERIES[max(0, i - range_): i + range_ + 1])
    return [InterpreterVersion("2.7")] + [InterpreterVersion(s) for s in band]


class CandidateBuilder:
    def __init__(self, gateway: ModelGateway, retriever: Retriever | None, mapping: NameMapping | None = None,
                 now: datetime | None = None) -> None:
        self.gateway = gateway
        self.retriever = retriever
        self.mapping = mapping or NameMapping.default()
        self.now = now
        self.dropped: list[str] = []
        self._lock = threading.Lock()

    # -- picking one version -------------------------------------------------

    def _pick(self, req: ModuleRequirement, interpreter: InterpreterVersion, history: AttemptHistory,
              rag: bool, exclude: Sequence[str] = ()) -> str:
        previous = list(dict.fromkeys([*history.tried_versions(req.install_name, interpreter), *exclude]))
        if rag:
            if self.retriever is None:
                raise ValueError("retrieval mode needs a retriever")
            catalog = self.retriever.fetch_catalog(req.install_name)
            text = to_prompt_text(filter_for_interpreter(catalog, window_for(interpreter, self.now)))
            try:
                return self.gateway.pick_version(req, text, previous, interpreter)
            except VersionsExhausted as exc:
                raise CandidateSpaceExhausted(req.install_name, "every plausible version was tried") from exc
        try:
            return self.gateway.pick_version(req, None, previous, interpreter, avoid=previous)
        except MalformedReplyError as exc:
            raise CandidateSpaceExhausted(req.install_name, "the model offered no untried version") from exc

    def _settle(self, base: EnvironmentCandidate, req: ModuleRequirement, interpreter: InterpreterVersion,
                history: AttemptHistory, rag: bool, exclude: Sequence[str] = ()) -> EnvironmentCandidate:
        """``base`` with ``req`` (re)pinned to a version that yields an untried key."""
        excluded = list(exclude)
        for _ in range(MAX_COLLISION_RETRIES):
            version = self._pick(req, interpreter, history, rag, excluded)
            candidate = base.with_pin(req.pinned(version))
            if candidate.canonical_key not in history:
                return candidate
            excluded.append(version)
        raise CandidateSpaceExhausted(req.install_name, "kept regenerating tried candidates")

    # -- stage B ---------------------------------------------------------------

    def pin_versions(self, reqs: Sequence[ModuleRequirement], interpreter: InterpreterVersion,
                     history: AttemptHistory, rag: bool) -> EnvironmentCandidate:
        pins: list[ModuleRequirement] = []
        for req in reqs:
            if any(normalize_name(p.install_name) == normalize_name(req.install_name) for p in pins):
                continue
            try:
                pins.append(req.pinned(self._pick(req, interpreter, history, rag)))
            except UnknownPackage:
                log.warning("%s is not on the registry; leaving it out", req.install_name)
                with self._lock:
                    self.dropped.append(req.install_name)
        candidate = EnvironmentCandidate(interpreter, tuple(pins))
        if candidate.canonical_key not in history:
            return candidate
        if not pins:
            raise CandidateSpaceExhausted(None, f"interpreter-only candidate for {interpreter} already tried")
        last = pins[-1]
        return self._settle(candidate, last, interpreter, history, rag, [last.version])

    # -- stage E edits -----------------------------------------------------------

    def _find_pin(self, candidate: EnvironmentCandidate, name: str) -> ModuleRequirement | None:
        wanted = {normalize_name(name), normalize_name(self.mapping.lookup(name))}
        for p in candidate.pins:
            if normalize_name(p.install_name) in wanted or p.import_name == name:
                return p
        return None

    def _repin(self, prev: EnvironmentCandidate, pin: ModuleRequirement, history: AttemptHistory, rag: bool,
               extra: Sequence[str] = ()) -> EnvironmentCandidate:
        exclude = [pin.version, *extra]
        return self._settle(prev, pin, prev.interpreter, history, rag, exclude)

    def _add(self, prev: EnvironmentCandidate, import_name: str, history: AttemptHistory,
             rag: bool) -> EnvironmentCandidate:
        if is_stdlib(import_name, prev.interpreter):
            raise CandidateSpaceExhausted(import_name, f"part of the {prev.interpreter} standard library")
        req = ModuleRequirement(import_name, self.mapping.lookup(import_name))
        try:
            return self._settle(prev, req, prev.interpreter, history, rag)
        except UnknownPackage as exc:
            raise CandidateSpaceExhausted(import_name, "not on the registry") from exc

    def _rotate(self, prev: EnvironmentCandidate, history: AttemptHistory, rag: bool) -> EnvironmentCandidate:
        """Re-pin some pin when the log names nothing usable, starting from a rotating offset."""
        if not prev.pins:
            raise CandidateSpaceExhausted(None, "nothing pinned to vary")
        n = len(prev.pins)
        for step in range(n):
            pin = prev.pins[(history.iteration + step) % n]
            try:
                return self._repin(prev, pin, history, rag)
            except CandidateSpaceExhausted:
                continue
        raise CandidateSpaceExhausted(None, "every pin is exhausted")

    def vary_after_failure(self, prev: EnvironmentCandidate, triage: TriageReport, history: AttemptHistory,
                           rag: bool) -> EnvironmentCandidate:
        """Apply exactly one edit to ``prev`` according to the failure class."""
        cls = triage.primary_class
        payload = triage.payload
        if cls is ErrorClass.SyntaxError:
            raise CandidateSpaceExhausted(None, f"{prev.interpreter} cannot parse the file")

        module = payload.get("module", "").strip()
        if cls is ErrorClass.ModuleNotFound and module:
            pin = self._find_pin(prev, module)
            return self._repin(prev, pin, history, rag) if pin else self._add(prev, module, history, rag)

        if cls in (ErrorClass.ImportError, ErrorClass.AttributeError) and module:
            pin = self._find_pin(prev, module)
            if pin:
                return self._repin(prev, pin, history, rag)
            if not is_stdlib(module, prev.interpreter):
                try:
                    return self._add(prev, module, history, rag)
                except CandidateSpaceExhausted:
                    pass

        if cls in (ErrorClass.VersionNotFound, ErrorClass.InvalidVersion) and module:
            pin = self._find_pin(prev, module)
            if pin:
                requested = payload.get("requested_version", "")
                return self._repin(prev, pin, history, rag, [requested] if requested else [])

        if cls is ErrorClass.DependencyConflict:
            for name in payload.get("conflicting_modules", "").split(","):
                pin = self._find_pin(prev, name.strip()) if name.strip() else None
                if pin:
                    return self._repin(prev, pin, history, rag)

        if cls is ErrorClass.NonZeroCode and module:
            pin = self._find_pin(prev, module)
            if pin:
                return self._repin(prev, pin, history, rag)

        return self._rotate(prev, history, rag)
