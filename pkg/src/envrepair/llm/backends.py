"""Text-generation backends.

A backend is anything with ``generate(request) -> str``. The HTTP backend
speaks the Ollama ``/api/generate`` dialect:

request body::

    {"model": "<name>", "prompt": "<text>", "stream": false,
     "options": {"temperature": 0.7, "seed": 42}}

response body::

    {"model": "<name>", "response": "<reply text>", "done": true, ...}
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Protocol
from urllib.parse import parse_qs, urlparse

import requests

from ..errors import BackendError
from .templates import binding_digest

if TYPE_CHECKING:
    from .stubs import Knowledge

log = logging.getLogger(__name__)

BACKEND_URL_ENV = "ENVREPAIR_BACKEND_URL"
DEFAULT_BACKEND_URL = "http://localhost:11434"


@dataclass(frozen=True)
class GenerationRequest:
    model_name: str
    temperature: float
    rendered_prompt: str
    seed: int | None = None
    # Metadata for stubs and transcripts; never sent over the wire.
    prompt_id: str = ""
    bindings: Mapping[str, str] = field(default_factory=dict)
    attempt: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must lie in [0, 1], got {self.temperature}")


class TextBackend(Protocol):
    def generate(self, request: GenerationRequest) -> str: ...


class OllamaBackend:
    def __init__(self, base_url: str = DEFAULT_BACKEND_URL, timeout: float = 300.0, retries: int = 2,
                 session: requests.Session | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()

    def generate(self, request: GenerationRequest) -> str:
        options: dict = {"temperature": request.temperature}
        if request.seed is not None:
            options["seed"] = request.seed
        body = {"model": request.model_name, "prompt": request.rendered_prompt, "stream": False, "options": options}
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(f"{self.base_url}/api/generate", json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
                log.warning("backend request failed (attempt %d): %s", attempt + 1, exc)
                time.sleep(min(2 ** attempt, 5) * 0.1)
                continue
            if resp.status_code >= 500:
                last = BackendError(f"backend answered {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"backend answered {resp.status_code}: {resp.text[:200]}")
            try:
                return str(resp.json()["response"])
            except (ValueError, KeyError) as exc:
                raise BackendError(f"unexpected backend response: {resp.text[:200]}") from exc
        raise BackendError(f"backend at {self.base_url} unreachable: {last}")

    def available(self) -> bool:
        try:
            return self.session.get(f"{self.base_url}/api/tags", timeout=2).ok
        except requests.RequestException:
            return False


class TranscriptBackend:
    """Replays recorded replies.

    The fixture directory holds ``*.json`` files, each an object mapping
    ``"<prompt_id>:<binding digest>"`` (or ``"<prompt_id>:*"``) to a reply
    string or a list of replies served in order for successive attempts.
    """

    def __init__(self, directory: str | Path) -> None:
        self.entries: dict[str, list[str]] = {}
        for path in sorted(Path(directory).glob("*.json")):
            for key, value in json.loads(path.read_text("utf-8")).items():
                self.entries[key] = [value] if isinstance(value, str) else list(value)

    def generate(self, request: GenerationRequest) -> str:
        for key in (f"{request.prompt_id}:{binding_digest(request.bindings)}", f"{request.prompt_id}:*"):
            replies = self.entries.get(key)
            if replies:
                return replies[min(request.attempt, len(replies) - 1)]
        raise BackendError(f"no recorded reply for {request.prompt_id} ({binding_digest(request.bindings)})")


class RecordingBackend:
    """Wraps another backend and collects a transcript that TranscriptBackend can replay."""

    def __init__(self, inner: TextBackend) -> None:
        self.inner = inner
        self.transcript: dict[str, list[str]] = {}
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> str:
        reply = self.inner.generate(request)
        key = f"{request.prompt_id}:{binding_digest(request.bindings)}"
        with self._lock:
            self.transcript.setdefault(key, []).append(reply)
        return reply

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.transcript, indent=2, sort_keys=True), "utf-8")


def backend_from_url(url: str | None = None, seed: int | None = None, knowledge: Knowledge | None = None
                     ) -> TextBackend:
    """Build a backend from a URL.

    ``http(s)://host:port`` talks to a model server; ``stub://deterministic``
    and ``stub://stochastic`` are offline stand-ins; ``transcript:///dir``
    replays recorded replies. ``seed``, when given, overrides a ``seed``
    query parameter so repeated runs can vary it.
    """
    from .stubs import DeterministicStub, StochasticStub

    url = url or os.environ.get(BACKEND_URL_ENV) or DEFAULT_BACKEND_URL
    parsed = urlparse(url)
    if parsed.scheme in ("http", "https"):
        return OllamaBackend(url)
    if parsed.scheme == "stub":
        params = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
        if parsed.netloc == "deterministic":
            return DeterministicStub(knowledge)
        if parsed.netloc == "stochastic":
            return StochasticStub(
                seed=seed if seed is not None else int(params.get("seed", 0)),
                miss_rate=float(params.get("miss_rate", 0.2)),
                noise=float(params.get("noise", 0.1)),
                knowledge=knowledge,
            )
    if parsed.scheme == "transcript":
        return TranscriptBackend(parsed.path)
    raise ValueError(f"unsupported backend url: {url!r}")
