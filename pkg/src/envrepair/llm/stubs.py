"""Offline stand-ins for a model server.

They answer by prompt id, reading the bindings carried on the request, so
they are safe to share between threads and do not depend on call order.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
from typing import Callable, Mapping, Sequence

from ..inspector import SourceFile, extract_imports
from ..interpreters import DEFAULT_SERIES
from ..sampling import equal_distance_pick
from .backends import GenerationRequest

Knowledge = Callable[[str, str], Sequence[str]]

AVOID_RE = re.compile(r"Do not return any of these versions: ([^\n]*)")
_PY2_MARKERS = (
    re.compile(r"^\s*print\s+[^\s(=]", re.M),
    re.compile(r"^\s*except\s+[\w.]+\s*,\s*\w+\s*:", re.M),
    re.compile(r"^\s*exec\s+[\"']", re.M),
)


def guess_series(code: str, default: str = DEFAULT_SERIES) -> str:
    return "2.7" if any(p.search(code) for p in _PY2_MARKERS) else default


def _avoided(prompt: str) -> list[str]:
    m = AVOID_RE.search(prompt)
    return [v for v in m.group(1).split(",") if v] if m else []


def payload_guess(error_class: str, log: str) -> dict:
    """Pattern-level reading of an error message, roughly what a model would say."""
    if error_class in ("VersionNotFound", "InvalidVersion"):
        m = re.search(r"([A-Za-z0-9][\w.\-]*)\s*==\s*([^\s'\")]+)", log)
        if m:
            return {"module": m.group(1), "requested_version": m.group(2)}
        return {}
    if error_class == "DependencyConflict":
        names = re.findall(r"\b([A-Za-z][\w.\-]*)==", log)
        return {"conflicting_modules": list(dict.fromkeys(names))} if names else {}
    if error_class == "AttributeError":
        m = re.search(r"module '([\w.]+)' has no attribute '(\w+)'", log)
        return {"module": m.group(1), "attribute": m.group(2)} if m else {}
    if error_class == "SyntaxError":
        m = re.search(r"line (\d+)", log)
        return {"line_number": m.group(1)} if m else {}
    if error_class == "NonZeroCode":
        m = re.search(r"non-zero code: (\d+)", log)
        return {"exit_code": m.group(1) if m else "1"}
    for pattern in (r"from '?([\w.]+)'?", r"named '?([\w.]+)'?", r"^\s*import ([\w.]+)"):
        m = re.search(pattern, log, re.M)
        if m:
            return {"module": m.group(1).split(".")[0]}
    return {}


class DeterministicStub:
    """Answers every prompt the same way, given the same request.

    ``knowledge`` stands in for what a model remembers about release history;
    it is only consulted by the retrieval-free version prompt.
    """

    def __init__(self, knowledge: Knowledge | None = None, default_series: str = DEFAULT_SERIES) -> None:
        self.knowledge = knowledge
        self.default_series = default_series

    def generate(self, request: GenerationRequest) -> str:
        b = request.bindings
        pid = request.prompt_id
        if pid == "infer_file":
            src = SourceFile.from_text(b["raw_file"])
            modules = [{"module": m.top_level_name, "version": ""} for m in extract_imports(src)]
            return json.dumps({"python_modules": modules, "python_version": guess_series(b["raw_file"], self.default_series)})
        if pid == "pick_version_rag":
            versions = [v for v in b["module_versions"].split(",") if v]
            previous = [v for v in b["previous_versions"].split(",") if v]
            return json.dumps({"module": b["module_name"], "version": equal_distance_pick(versions, previous)})
        if pid == "pick_version_bare":
            return json.dumps({"module": b["module_name"], "version": self._bare(b, request.rendered_prompt)})
        if pid == "extract_import_error" or pid.startswith("triage_"):
            cls = "ImportError" if pid == "extract_import_error" else pid[len("triage_"):]
            return json.dumps(payload_guess(cls, b["error_msg"]))
        return "{}"

    def _bare(self, b: Mapping[str, str], prompt: str) -> str:
        versions = list(self.knowledge(b["module_name"], b["python_version"])) if self.knowledge else []
        if not versions:
            return "1.0"
        avoid = _avoided(prompt)
        if all(v in avoid for v in versions):
            return versions[-1]
        return equal_distance_pick(versions, avoid)


class StochasticStub(DeterministicStub):
    """Seeded randomness, keyed on the prompt text so thread order does not matter.

    ``miss_rate`` drops modules from the file-level inference; ``noise`` is the
    chance of a reply that breaks the requested format.
    """

    def __init__(self, seed: int = 0, miss_rate: float = 0.2, noise: float = 0.1,
                 knowledge: Knowledge | None = None, default_series: str = DEFAULT_SERIES) -> None:
        super().__init__(knowledge, default_series)
        self.seed = seed
        self.miss_rate = miss_rate
        self.noise = noise

    def _rng(self, request: GenerationRequest) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}|{request.attempt}|{request.rendered_prompt}".encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def generate(self, request: GenerationRequest) -> str:
        rng = self._rng(request)
        if rng.random() < self.noise:
            return rng.choice(["Sure! Here is what you asked for.", "```json\n{\"oops\": true}\n```", "{not json"])
        b = request.bindings
        pid = request.prompt_id
        if pid == "infer_file":
            src = SourceFile.from_text(b["raw_file"])
            kept = [m for m in extract_imports(src) if rng.random() >= self.miss_rate]
            base = guess_series(b["raw_file"], self.default_series)
            if base != "2.7" and rng.random() < 0.3:
                minor = int(base.split(".")[1]) + rng.choice([-1, 1])
                base = f"3.{min(max(minor, 4), 12)}"
            modules = [{"module": m.top_level_name, "version": ""} for m in kept]
            return json.dumps({"python_modules": modules, "python_version": base})
        if pid == "pick_version_rag":
            versions = [v for v in b["module_versions"].split(",") if v]
            previous = set(v for v in b["previous_versions"].split(",") if v)
            remaining = [v for v in versions if v not in previous] or versions
            return json.dumps({"module": b["module_name"], "version": rng.choice(remaining)})
        if pid == "pick_version_bare":
            versions = list(self.knowledge(b["module_name"], b["python_version"])) if self.knowledge else []
            avoid = set(_avoided(request.rendered_prompt))
            pool = [v for v in versions if v not in avoid] or versions or ["1.0"]
            return json.dumps({"module": b["module_name"], "version": rng.choice(pool)})
        return super().generate(request)


class ScriptedStub:
    """Serves a fixed list of replies per prompt id, in order; the last one repeats."""

    def __init__(self, script: Mapping[str, Sequence[str]]) -> None:
        self.script = {k: list(v) for k, v in script.items()}
        self.calls: dict[str, int] = {}
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> str:
        with self._lock:
            n = self.calls.get(request.prompt_id, 0)
            self.calls[request.prompt_id] = n + 1
        replies = self.script.get(request.prompt_id)
        if not replies:
            return ""
        return replies[min(n, len(replies) - 1)]

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())
