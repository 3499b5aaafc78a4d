"""Container build files for environment candidates."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .models import EnvironmentCandidate

SNIPPET_FILENAME = "snippet.py"
PIP_TIMEOUT_SECONDS = 100

# Anything outside these sets could escape the JSON-array RUN form.
_SAFE_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_SAFE_VERSION = re.compile(r"^[A-Za-z0-9][A-Za-z0-9.+!_*-]*$")
_SAFE_FILE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9._-]*\.py$")


def container_tag(run_id: str, candidate: EnvironmentCandidate) -> str:
    digest = hashlib.sha1(candidate.canonical_key.encode("utf-8")).hexdigest()[:12]
    run = re.sub(r"[^a-z0-9_.-]", "-", run_id.lower()) or "run"
    return f"envrepair-{run}-{digest}"


@dataclass(frozen=True)
class BuildRecipe:
    candidate: EnvironmentCandidate
    snippet_filename: str = SNIPPET_FILENAME
    pip_timeout_seconds: int = PIP_TIMEOUT_SECONDS
    container_tag: str = ""
    snippet_source: str = ""

    def __post_init__(self) -> None:
        if not _SAFE_FILE.match(self.snippet_filename):
            raise ValueError(f"unsafe snippet filename {self.snippet_filename!r}")
        if self.pip_timeout_seconds <= 0:
            raise ValueError("pip_timeout_seconds must be positive")
        if not self.container_tag:
            object.__setattr__(self, "container_tag", container_tag("local", self.candidate))

    @classmethod
    def for_candidate(cls, candidate: EnvironmentCandidate, run_id: str, source: str = "") -> BuildRecipe:
        return cls(candidate, container_tag=container_tag(run_id, candidate), snippet_source=source)


def emit(recipe: BuildRecipe) -> str:
    cand = recipe.candidate
    lines = [
        f"FROM python:{cand.interpreter.series}",
        "WORKDIR /app",
        'RUN ["pip","install","--upgrade","pip"]',
    ]
    for pin in cand.pins:
        if pin.version is None:
            raise ValueError(f"{pin.install_name} is not pinned")
        if not _SAFE_NAME.match(pin.install_name):
            raise ValueError(f"unsafe package name {pin.install_name!r}")
        if not _SAFE_VERSION.match(pin.version):
            raise ValueError(f"unsafe version {pin.version!r} for {pin.install_name}")
        lines.append(
            'RUN ["pip","install","--trusted-host","pypi.python.org",'
            f'"--default-timeout={recipe.pip_timeout_seconds}","{pin.install_name}=={pin.version}"]'
        )
    lines.append(f"COPY {recipe.snippet_filename} /app")
    lines.append(f'CMD ["python", "/app/{recipe.snippet_filename}"]')
    return "\n".join(lines) + "\n"
