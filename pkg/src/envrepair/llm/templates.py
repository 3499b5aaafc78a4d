"""Prompt templates and the reply shapes each one asks for."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Mapping

from ..errors import ExtraBinding, MissingPlaceholder

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    schema_id: str
    placeholders: frozenset[str] = field(default=frozenset())

    def __post_init__(self) -> None:
        found = frozenset(_PLACEHOLDER.findall(self.body))
        if self.placeholders and self.placeholders != found:
            raise ValueError(f"{self.id}: declared placeholders {sorted(self.placeholders)} != body {sorted(found)}")
        object.__setattr__(self, "placeholders", found)


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute every ``{name}`` in the body with its binding, verbatim."""
    for name in sorted(template.placeholders):
        if name not in bindings:
            raise MissingPlaceholder(name)
    for name in sorted(bindings):
        if name not in template.placeholders:
            raise ExtraBinding(name)
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template.body)


# Reply shapes, shown to the model verbatim as format instructions.
FORMAT_SHAPES: dict[str, str] = {
    "environment": '{ "python_modules": [{"module": "<String>", "version": "<String>"}], "python_version": "<String>" }',
    "version_choice": '{"module": "<String>", "version": "<String>"}',
    "module": '{"module": "<String>"}',
    "module_version": '{"module": "<String>", "requested_version": "<String>"}',
    "conflict": '{"conflicting_modules": ["<String>", "<String>"]}',
    "attribute": '{"module": "<String>", "attribute": "<String>"}',
    "syntax": '{"line_number": "<String>"}',
    "exit_code": '{"exit_code": "<String>", "module": "<String>"}',
}

_str = {"type": "string"}
_name = {"type": "string", "minLength": 1}

JSON_SCHEMAS: dict[str, dict] = {
    "environment": {
        "type": "object",
        "required": ["python_modules", "python_version"],
        "properties": {
            "python_modules": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["module"],
                    "properties": {"module": _name, "version": {"type": ["string", "null"]}},
                },
            },
            "python_version": {"type": ["string", "number"]},
        },
    },
    "version_choice": {
        "type": "object",
        "required": ["version"],
        "properties": {"module": _str, "version": {"type": ["string", "number"], "minLength": 1}},
    },
    "module": {"type": "object", "required": ["module"], "properties": {"module": _name}},
    "module_version": {
        "type": "object",
        "required": ["module", "requested_version"],
        "properties": {"module": _name, "requested_version": _name},
    },
    "conflict": {
        "type": "object",
        "required": ["conflicting_modules"],
        "properties": {"conflicting_modules": {"type": "array", "minItems": 1, "items": _name}},
    },
    "attribute": {
        "type": "object",
        "required": ["module", "attribute"],
        "properties": {"module": _name, "attribute": _name},
    },
    "syntax": {"type": "object", "required": ["line_number"], "properties": {"line_number": {"type": ["string", "integer"]}}},
    "exit_code": {"type": "object", "required": ["exit_code"], "properties": {"exit_code": {"type": ["string", "integer"]}, "module": _str}},
}


def format_instructions(schema_id: str) -> str:
    return FORMAT_SHAPES[schema_id]


def _t(id: str, body: str, schema_id: str) -> PromptTemplate:
    return PromptTemplate(id, body, schema_id)


TEMPLATES: dict[str, PromptTemplate] = {
    t.id: t
    for t in [
        _t(
            "infer_file",
            "Given a python file:\n{raw_file}\nReturn a list of Python modules and python version required to run. "
            "Output JSON based on the schema {format_instructions}",
            "environment",
        ),
        _t(
            "pick_version_rag",
            "Given a comma-separated list of 'Module versions' for the '{module_name}' module, from oldest to newest:\n"
            "{module_versions}\nPerform equally distanced sampling to return a version from the given versions, "
            "excluding previously used versions ({previous_versions}). Return the information with the format "
            "{format_instructions}",
            "version_choice",
        ),
        _t(
            "pick_version_bare",
            "Infer a possible working version of the '{module_name}' module for Python {python_version}.\n"
            "Return the information with the format {format_instructions}",
            "version_choice",
        ),
        _t(
            "extract_import_error",
            "Given the following ImportError:\n{error_msg}\nIdentify the module causing the error.\n"
            "The module is usually mentioned in a statement like 'from x import y'.\n"
            "Return just the module name using the format {format_instructions}",
            "module",
        ),
        _t(
            "triage_ModuleNotFound",
            "Given the following ModuleNotFoundError:\n{error_msg}\nIdentify the module that could not be found.\n"
            "It is usually quoted in a message like \"No module named 'x'\".\n"
            "Return just the module name using the format {format_instructions}",
            "module",
        ),
        _t(
            "triage_VersionNotFound",
            "Given the following package installation error:\n{error_msg}\n"
            "Identify the module and the version that could not be found.\n"
            "Return the information using the format {format_instructions}",
            "module_version",
        ),
        _t(
            "triage_InvalidVersion",
            "Given the following package installation error:\n{error_msg}\n"
            "Identify the module whose requested version is invalid, and that version.\n"
            "Return the information using the format {format_instructions}",
            "module_version",
        ),
        _t(
            "triage_DependencyConflict",
            "Given the following dependency conflict:\n{error_msg}\n"
            "List the modules involved in the conflict in the order they are mentioned.\n"
            "Return the information using the format {format_instructions}",
            "conflict",
        ),
        _t(
            "triage_AttributeError",
            "Given the following AttributeError:\n{error_msg}\n"
            "Identify the module that lacks the attribute, and the attribute name.\n"
            "Return the information using the format {format_instructions}",
            "attribute",
        ),
        _t(
            "triage_SyntaxError",
            "Given the following SyntaxError:\n{error_msg}\nIdentify the line number of the offending statement.\n"
            "Return the information using the format {format_instructions}",
            "syntax",
        ),
        _t(
            "triage_NonZeroCode",
            "Given the following failed build or run log:\n{error_msg}\n"
            "Identify the exit code and, if a package installation step failed, the module being installed.\n"
            "Return the information using the format {format_instructions}",
            "exit_code",
        ),
    ]
}


def triage_template_id(error_class: str) -> str:
    return "extract_import_error" if error_class == "ImportError" else f"triage_{error_class}"


def binding_digest(bindings: Mapping[str, str]) -> str:
    blob = json.dumps(dict(bindings), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
