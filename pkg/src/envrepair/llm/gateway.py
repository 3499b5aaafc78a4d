from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import jsonschema

from ..errors import MalformedReplyError, VersionsExhausted
from ..inspector import SourceFile
from ..interpreters import DEFAULT_SERIES, InterpreterVersion
from ..models import ModuleRequirement
from ..sampling import equal_distance_pick
from .backends import GenerationRequest, TextBackend
from .templates import JSON_SCHEMAS, TEMPLATES, format_instructions, render, triage_template_id

log = logging.getLogger(__name__)

DEFAULT_RETRY_BUDGET = 2
DEFAULT_TEMPERATURE = 0.7


@dataclass(frozen=True)
class StructuredReply:
    schema_id: str
    payload: dict
    raw_text: str


@dataclass(frozen=True)
class InferredEnvironment:
    python_modules: tuple[tuple[str, str], ...] = ()
    python_version: str = DEFAULT_SERIES

    def __post_init__(self) -> None:
        if not re.fullmatch(r"\d+(\.\d+)?", self.python_version):
            raise ValueError(f"python_version must look like major[.minor], got {self.python_version!r}")
        if any(not name for name, _ in self.python_modules):
            raise ValueError("module names must be non-empty")

    @property
    def module_names(self) -> list[str]:
        return [name for name, _ in self.python_modules]


def parse_json_object(text: str) -> dict | None:
    """First JSON object embedded in ``text``; tolerates prose and code fences around it."""
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", text):
        try:
            obj, _ = decoder.raw_decode(text, m.start())
        except ValueError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


# A check returns None when the payload is acceptable, otherwise the reason it is not.
Check = Callable[[dict], "str | None"]


@dataclass
class ModelGateway:
    backend: TextBackend
    model_name: str = "gemma2"
    temperature: float = DEFAULT_TEMPERATURE
    seed: int | None = None
    retry_budget: int = DEFAULT_RETRY_BUDGET

    def ask(self, template_id: str, bindings: dict[str, str], check: Check | None = None,
            hint: str = "") -> StructuredReply:
        """Render, send, parse and validate, re-prompting on bad replies.

        The backend is called at most ``1 + retry_budget`` times.
        """
        template = TEMPLATES[template_id]
        full = {**bindings, "format_instructions": format_instructions(template.schema_id)}
        prompt = render(template, full)
        schema = JSON_SCHEMAS[template.schema_id]
        raw = ""
        suffix = ""
        for attempt in range(self.retry_budget + 1):
            request = GenerationRequest(self.model_name, self.temperature, prompt + suffix, self.seed,
                                        template_id, full, attempt)
            raw = self.backend.generate(request)
            payload = parse_json_object(raw)
            if payload is None:
                reason = "the reply contained no JSON object"
            else:
                try:
                    jsonschema.validate(payload, schema)
                    reason = check(payload) if check else None
                except jsonschema.ValidationError as exc:
                    reason = f"the reply did not match the schema: {exc.message}"
            if reason is None:
                return StructuredReply(template.schema_id, payload, raw)
            log.debug("%s attempt %d rejected: %s", template_id, attempt + 1, reason)
            suffix = f"\n\nYour previous reply was rejected because {reason}. Reply again using exactly the format above."
            suffix += hint
        raise MalformedReplyError(f"{template_id}: no acceptable reply after {self.retry_budget + 1} attempts", raw)

    def infer_environment(self, file: SourceFile) -> InferredEnvironment:
        if not file.content.strip():
            return InferredEnvironment((), DEFAULT_SERIES)

        def check(payload: dict) -> str | None:
            if not re.search(r"\d+(\.\d+)?", str(payload["python_version"])):
                return "python_version is not a version number"
            return None

        reply = self.ask("infer_file", {"raw_file": file.content}, check)
        version = re.search(r"\d+(\.\d+)?", str(reply.payload["python_version"])).group(0)
        modules = []
        seen = set()
        for item in reply.payload["python_modules"]:
            name = item["module"].strip()
            if name and name not in seen:
                seen.add(name)
                modules.append((name, str(item.get("version") or "")))
        return InferredEnvironment(tuple(modules), version)

    def pick_version(self, module: ModuleRequirement, catalog_text: str | None, previous: Sequence[str],
                     interpreter: InterpreterVersion, avoid: Sequence[str] = ()) -> str:
        """Choose a version for ``module``.

        With a catalog, the reply must be a catalog member outside ``previous``;
        after the retry budget the choice falls back to equal-distance sampling.
        Without one, any non-empty reply outside ``avoid`` is taken as is.
        """
        if catalog_text is not None:
            return self._pick_from_catalog(module, catalog_text, previous)

        banned = set(avoid)

        def check(payload: dict) -> str | None:
            version = _clean_version(payload["version"])
            if not version:
                return "the version is empty"
            if version in banned:
                return f"version {version} was already tried"
            return None

        hint = "\nDo not return any of these versions: " + ",".join(avoid) if banned else ""
        reply = self.ask("pick_version_bare", {"module_name": module.install_name,
                                               "python_version": interpreter.series}, check, hint)
        return _clean_version(reply.payload["version"])

    def _pick_from_catalog(self, module: ModuleRequirement, catalog_text: str, previous: Sequence[str]) -> str:
        versions = [v for v in catalog_text.split(",") if v]
        if not versions:
            raise ValueError("catalog text must list at least one version")
        tried = [v for v in previous if v in set(versions)]
        if len(set(tried)) >= len(set(versions)):
            raise VersionsExhausted(module.install_name)
        allowed = set(versions) - set(tried)

        def check(payload: dict) -> str | None:
            version = _clean_version(payload["version"])
            if version not in set(versions):
                return f"version {version!r} is not in the given list"
            if version not in allowed:
                return f"version {version} was previously used"
            return None

        bindings = {"module_name": module.install_name, "module_versions": ",".join(versions),
                    "previous_versions": ",".join(tried)}
        try:
            reply = self.ask("pick_version_rag", bindings, check)
        except MalformedReplyError:
            log.info("falling back to equal-distance pick for %s", module.install_name)
            return equal_distance_pick(versions, tried, module.install_name)
        return _clean_version(reply.payload["version"])

    def extract_error_payload(self, error_class: str, log_excerpt: str) -> dict[str, str]:
        if not log_excerpt.strip():
            raise MalformedReplyError(f"nothing to extract from an empty {error_class} log", "")
        reply = self.ask(triage_template_id(error_class), {"error_msg": log_excerpt})
        return {k: _as_text(v) for k, v in reply.payload.items() if _as_text(v)}


def _clean_version(value: Any) -> str:
    text = str(value).strip()
    return text[2:].strip() if text.startswith("==") else text


def _as_text(value: Any) -> str:
    if isinstance(value, list):
        return ",".join(str(v) for v in value if str(v))
    return "" if value is None else str(value).strip()
