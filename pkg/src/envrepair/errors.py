"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class EnvRepairError(Exception):
    pass


class UnsupportedInterpreter(EnvRepairError, ValueError):
    def __init__(self, series: str) -> None:
        super().__init__(f"unsupported interpreter series: {series!r}")
        self.series = series


# -- model gateway --------------------------------------------------------

class TemplateError(EnvRepairError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class MissingPlaceholder(TemplateError):
    def __init__(self, name: str) -> None:
        super().__init__(f"missing binding for placeholder {name!r}")
        self.placeholder = name


class ExtraBinding(TemplateError):
    def __init__(self, name: str) -> None:
        super().__init__(f"binding {name!r} has no placeholder in template")
        self.placeholder = name


class BackendError(EnvRepairError):
    """The text-generation service could not be reached or answered with an error."""


class MalformedReplyError(EnvRepairError):
    def __init__(self, message: str, raw_text: str) -> None:
        super().__init__(message)
        self.raw_text = raw_text


class VersionsExhausted(EnvRepairError):
    def __init__(self, module: str) -> None:
        super().__init__(f"every catalog version of {module!r} was already tried")
        self.module = module


# -- registry -------------------------------------------------------------

class UnknownPackage(EnvRepairError):
    def __init__(self, name: str) -> None:
        super().__init__(f"package {name!r} not found on registry")
        self.name = name


class RegistryUnavailable(EnvRepairError):
    pass


# -- candidates / validation ---------------------------------------------

class CandidateSpaceExhausted(EnvRepairError):
    def __init__(self, module: str | None, reason: str = "") -> None:
        what = f"no admissible edit left for {module!r}" if module else "no admissible edit left"
        super().__init__(f"{what}{': ' + reason if reason else ''}")
        self.module = module


class EngineUnavailable(EnvRepairError):
    """The container engine is missing or its daemon is unreachable."""
