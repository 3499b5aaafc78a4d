"""The repair loop: infer, pin, validate across interpreter branches, triage, edit, repeat."""

from __future__ import annotations

import json
import logging
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import NamedTuple, Sequence

from .candidates import MAX_RANGE, CandidateBuilder, expand_interpreters
from .dockerfile import BuildRecipe
from .errors import (BackendError, CandidateSpaceExhausted, EngineUnavailable, MalformedReplyError,
                     RegistryUnavailable)
from .inspector import NameMapping, SourceFile, extract_imports, is_stdlib, to_requirements
from .interpreters import DEFAULT_SERIES, InterpreterVersion, normalize_series
from .llm.gateway import InferredEnvironment, ModelGateway
from .models import AttemptHistory, EnvironmentCandidate, ModuleRequirement
from .registry import Retriever, normalize_name
from .triage import ErrorClass, TriageReport, classify, critical_classes_in
from .validator import ValidatorBackend, validate_parallel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoopConfig:
    loop_budget: int = 10
    range: int = 1
    rag: bool = True
    temperature: float = 0.7
    model_name: str = "gemma2"
    early_cancel: bool = True

    def __post_init__(self) -> None:
        if self.loop_budget < 1:
            raise ValueError("loop_budget must be >= 1")
        if not 0 <= self.range <= MAX_RANGE:
            raise ValueError(f"range must lie in 0..{MAX_RANGE}")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must lie in [0, 1]")


@dataclass(frozen=True)
class CycleTrace:
    iteration: int
    attempts: tuple[dict, ...]
    notes: tuple[str, ...] = ()

    @property
    def candidate_keys(self) -> list[str]:
        return [a["key"] for a in self.attempts]

    def to_json(self) -> dict:
        return {"type": "cycle", "iteration": self.iteration, "attempts": list(self.attempts),
                "notes": list(self.notes)}


@dataclass(frozen=True)
class RepairResult:
    status: str
    winning_candidate: EnvironmentCandidate | None
    iterations_used: int
    wall_time_seconds: float
    per_iteration_trace: tuple[CycleTrace, ...] = ()
    # First candidate whose run exited non-zero without a critical error.
    lenient_candidate: EnvironmentCandidate | None = None
    error: str = ""
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.status not in ("fixed", "unfixed", "aborted"):
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == "fixed") != (self.winning_candidate is not None):
            raise ValueError("a fixed result needs a winning candidate and only a fixed one may carry it")

    @property
    def winning_key(self) -> str | None:
        return self.winning_candidate.canonical_key if self.winning_candidate else None

    @property
    def tried_keys(self) -> list[str]:
        return [k for cycle in self.per_iteration_trace for k in cycle.candidate_keys]

    def to_json(self) -> dict:
        return {"type": "result", "status": self.status, "winning_key": self.winning_key,
                "lenient_key": self.lenient_candidate.canonical_key if self.lenient_candidate else None,
                "iterations_used": self.iterations_used, "wall_time_seconds": round(self.wall_time_seconds, 4),
                "error": self.error, "warnings": list(self.warnings)}


class StageA(NamedTuple):
    requirements: list[ModuleRequirement]
    interpreter: InterpreterVersion
    warning: str | None


def merge_stage_a(static: Sequence[ModuleRequirement], inferred: InferredEnvironment,
                  mapping: NameMapping) -> StageA:
    """Union of statically found and inferred modules, keyed by install name; static entries win."""
    merged: dict[str, ModuleRequirement] = {}
    for req in static:
        merged.setdefault(normalize_name(req.install_name), req)
    for name in inferred.module_names:
        req = ModuleRequirement(name, mapping.lookup(name))
        merged.setdefault(normalize_name(req.install_name), req)
    interpreter, warning = normalize_series(inferred.python_version)
    return StageA(list(merged.values()), interpreter, warning)


@dataclass
class _Branch:
    interpreter: InterpreterVersion
    requirements: list[ModuleRequirement]
    candidate: EnvironmentCandidate | None = None
    triage: TriageReport | None = None
    alive: bool = True


def repair(file: SourceFile, cfg: LoopConfig, gateway: ModelGateway, retriever: Retriever | None,
           validator: ValidatorBackend, mapping: NameMapping | None = None, trace_path: str | Path | None = None,
           run_id: str | None = None, now: datetime | None = None) -> RepairResult:
    started = time.monotonic()
    mapping = mapping or NameMapping.default()
    builder = CandidateBuilder(gateway, retriever, mapping, now)
    history = AttemptHistory()
    run_id = run_id or uuid.uuid4().hex[:8]
    cycles: list[CycleTrace] = []
    warnings: list[str] = []
    closures: list[str] = []
    lenient: EnvironmentCandidate | None = None

    def finish(status: str, winner: EnvironmentCandidate | None = None, error: str = "") -> RepairResult:
        result = RepairResult(status, winner, history.iteration, time.monotonic() - started, tuple(cycles),
                              lenient, error, tuple(warnings))
        if trace_path is not None:
            _write_trace(Path(trace_path), cycles, result)
        return result

    try:
        static = to_requirements(extract_imports(file), mapping)
        try:
            inferred = gateway.infer_environment(file)
        except MalformedReplyError as exc:
            warnings.append(f"inference failed ({exc}); using static imports and {DEFAULT_SERIES}")
            inferred = InferredEnvironment((), DEFAULT_SERIES)
        stage = merge_stage_a(static if cfg.rag else [], inferred, mapping)
        reqs = stage.requirements
        if not cfg.rag and not reqs and static:
            reqs = static
        if stage.warning:
            warnings.append(stage.warning)

        branches = [_Branch(interp, [r for r in reqs if not is_stdlib(r.import_name, interp)])
                    for interp in expand_interpreters(stage.interpreter, cfg.range)]

        for _ in range(cfg.loop_budget):
            live = []
            notes = []
            for b in branches:
                if not b.alive:
                    continue
                try:
                    if b.candidate is None:
                        b.candidate = builder.pin_versions(b.requirements, b.interpreter, history, cfg.rag)
                    else:
                        assert b.triage is not None
                        b.candidate = builder.vary_after_failure(b.candidate, b.triage, history, cfg.rag)
                except CandidateSpaceExhausted as exc:
                    b.alive = False
                    notes.append(f"{b.interpreter}: branch closed, {exc}")
                    closures.append(notes[-1])
                    continue
                live.append(b)
            if not live:
                warnings.extend(closures)
                break
            for b in live:
                assert b.candidate is not None
                history.record(b.candidate)
            recipes = [BuildRecipe.for_candidate(b.candidate, run_id, file.content) for b in live]
            outcomes = validate_parallel(recipes, validator, cfg.early_cancel)
            history.iteration += 1

            winner = None
            attempts = []
            for b, out in zip(live, outcomes):
                record = {"series": b.interpreter.series, "key": out.candidate_key, "phase": out.phase,
                          "status": out.status, "exit_code": out.exit_code,
                          "duration_seconds": round(out.duration_seconds, 4)}
                if out.status == "success":
                    winner = winner or b.candidate
                elif out.status != "cancelled":
                    report = classify(out, gateway)
                    b.triage = report
                    record["triage"] = report.summary()
                    if (lenient is None and out.phase == "run" and out.status == "failure"
                            and not critical_classes_in(out.log)):
                        lenient = b.candidate
                    if report.primary_class is ErrorClass.SyntaxError:
                        b.alive = False
                        notes.append(f"{b.interpreter}: branch closed, file does not parse")
                        closures.append(notes[-1])
                attempts.append(record)
            cycles.append(CycleTrace(history.iteration, tuple(attempts), tuple(notes)))
            if winner is not None:
                return finish("fixed", winner)
        return finish("unfixed")
    except (EngineUnavailable, BackendError, RegistryUnavailable) as exc:
        log.error("repair aborted: %s", exc)
        return finish("aborted", error=f"{type(exc).__name__}: {exc}")


def _write_trace(path: Path, cycles: Sequence[CycleTrace], result: RepairResult) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for cycle in cycles:
            fh.write(json.dumps(cycle.to_json()) + "\n")
        fh.write(json.dumps(result.to_json()) + "\n")
