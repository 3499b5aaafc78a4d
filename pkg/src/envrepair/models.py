"""Core value types: requirements, candidates and the attempt history."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .interpreters import InterpreterVersion


@dataclass(frozen=True)
class ModuleRequirement:
    import_name: str
    install_name: str
    version: str | None = None

    def __post_init__(self) -> None:
        if not self.install_name:
            raise ValueError("install_name must be non-empty")
        if self.version is not None and not self.version:
            raise ValueError("version, when set, must be non-empty")

    def pinned(self, version: str) -> ModuleRequirement:
        return ModuleRequirement(self.import_name, self.install_name, version)


@dataclass(frozen=True)
class EnvironmentCandidate:
    interpreter: InterpreterVersion
    pins: tuple[ModuleRequirement, ...] = ()

    def __post_init__(self) -> None:
        pins = tuple(sorted(self.pins, key=lambda p: p.install_name))
        names = [p.install_name for p in pins]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate install names in candidate: {names}")
        if any(p.version is None for p in pins):
            raise ValueError("every pin of a candidate needs a version")
        object.__setattr__(self, "pins", pins)

    @property
    def canonical_key(self) -> str:
        body = ";".join(f"{p.install_name}=={p.version}" for p in self.pins)
        return f"{self.interpreter.series}|{body}"

    def pin_for(self, install_name: str) -> ModuleRequirement | None:
        for p in self.pins:
            if p.install_name == install_name:
                return p
        return None

    def with_pin(self, req: ModuleRequirement) -> EnvironmentCandidate:
        rest = [p for p in self.pins if p.install_name != req.install_name]
        return EnvironmentCandidate(self.interpreter, tuple(rest) + (req,))


@dataclass
class AttemptHistory:
    """Everything tried so far within one repair call.

    Append-only. A single writer is assumed, but the lock keeps readers from
    other branches consistent.
    """

    tried_candidates: set[str] = field(default_factory=set)
    tried_versions_map: dict[tuple[str, str], dict[str, None]] = field(default_factory=dict)
    iteration: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __contains__(self, key: object) -> bool:
        return key in self.tried_candidates

    def tried_versions(self, install_name: str, interpreter: InterpreterVersion) -> list[str]:
        with self._lock:
            return list(self.tried_versions_map.get((install_name, interpreter.series), ()))

    def mark_version(self, install_name: str, interpreter: InterpreterVersion, version: str) -> None:
        with self._lock:
            self.tried_versions_map.setdefault((install_name, interpreter.series), {})[version] = None

    def record(self, candidate: EnvironmentCandidate) -> None:
        with self._lock:
            self.tried_candidates.add(candidate.canonical_key)
            for p in candidate.pins:
                assert p.version is not None
                key = (p.install_name, candidate.interpreter.series)
                self.tried_versions_map.setdefault(key, {})[p.version] = None


PHASES = ("build", "run")
STATUSES = ("success", "failure", "timeout", "cancelled")


@dataclass(frozen=True)
class BuildOutcome:
    """Result of validating one candidate.

    ``cancelled`` marks a sibling stopped before it started because another
    interpreter branch had already succeeded.
    """

    phase: str
    status: str
    exit_code: int | None
    log: str
    duration_seconds: float
    candidate_key: str

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}, got {self.status!r}")
        if self.duration_seconds < 0:
            raise ValueError("duration_seconds must be >= 0")
        if self.status == "success" and (self.phase != "run" or self.exit_code != 0):
            raise ValueError("a success outcome must come from the run phase with exit code 0")
