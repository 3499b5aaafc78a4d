"""Building and running candidates, in a real container engine or a simulated one."""

from __future__ import annotations

import hashlib
import logging
import re
import shutil
import subprocess
import tempfile
import threading
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from pathlib import Path
from typing import Protocol, Sequence

from packaging.version import InvalidVersion, Version

from .dockerfile import BuildRecipe, emit
from .errors import EngineUnavailable
from .interpreters import InterpreterVersion
from .models import BuildOutcome, EnvironmentCandidate, ModuleRequirement
from .registry import catalog_from_document, requires_satisfied
from .triage import critical_classes_in
from .world import World

log = logging.getLogger(__name__)

BUILD_TIMEOUT_SECONDS = 900.0
RUN_TIMEOUT_SECONDS = 120.0
DEFAULT_CONCURRENCY = 5

_ENGINE_DOWN = re.compile(
    r"Cannot connect to the Docker daemon|Is the docker daemon running|permission denied while trying to connect"
    r"|error during connect|Cannot connect to Podman", re.I)


class ValidatorBackend(Protocol):
    kind: str
    build_timeout: float
    run_timeout: float
    concurrency: int

    def validate(self, recipe: BuildRecipe) -> BuildOutcome: ...


def finish_run(key: str, exit_code: int, log_text: str, duration: float) -> BuildOutcome:
    """Run-phase outcome; exit 0 only counts as success when no critical error shows in the log."""
    ok = exit_code == 0 and not critical_classes_in(log_text)
    return BuildOutcome("run", "success" if ok else "failure", exit_code, log_text, duration, key)


# -- real engine -------------------------------------------------------------------


class ContainerBackend:
    """Drives a docker-compatible CLI: ``build``, ``run``, ``rm``, ``rmi``."""

    kind = "container"

    def __init__(self, engine: str = "docker", build_timeout: float = BUILD_TIMEOUT_SECONDS,
                 run_timeout: float = RUN_TIMEOUT_SECONDS, concurrency: int = DEFAULT_CONCURRENCY,
                 workdir: str | Path | None = None) -> None:
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.engine = engine
        self.build_timeout = build_timeout
        self.run_timeout = run_timeout
        self.concurrency = concurrency
        self.workdir = Path(workdir) if workdir else None
        self._slots = threading.BoundedSemaphore(concurrency)

    def available(self) -> bool:
        try:
            proc = subprocess.run([self.engine, "info"], capture_output=True, timeout=20)
        except (OSError, subprocess.TimeoutExpired):
            return False
        return proc.returncode == 0

    def _exec(self, args: list[str], timeout: float | None) -> tuple[int | None, str, float, bool]:
        start = time.monotonic()
        try:
            proc = subprocess.run(args, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, timeout=timeout)
        except FileNotFoundError as exc:
            raise EngineUnavailable(f"{self.engine} not found on PATH") from exc
        except subprocess.TimeoutExpired as exc:
            partial = (exc.output or b"").decode("utf-8", "replace")
            return None, partial, max(time.monotonic() - start, timeout or 0.0), True
        text = proc.stdout.decode("utf-8", "replace")
        if proc.returncode != 0 and _ENGINE_DOWN.search(text):
            raise EngineUnavailable(text.strip().splitlines()[-1] if text.strip() else "engine unreachable")
        return proc.returncode, text, time.monotonic() - start, False

    def _cleanup(self, tag: str) -> None:
        for args in ([self.engine, "rm", "-f", tag], [self.engine, "rmi", "-f", tag]):
            try:
                subprocess.run(args, capture_output=True, timeout=60)
            except (OSError, subprocess.TimeoutExpired):
                log.debug("cleanup %s failed", args)

    def validate(self, recipe: BuildRecipe) -> BuildOutcome:
        key = recipe.candidate.canonical_key
        tag = recipe.container_tag
        with self._slots:
            context = Path(tempfile.mkdtemp(prefix=f"{tag}-", dir=self.workdir))
            try:
                (context / "Dockerfile").write_text(emit(recipe), "utf-8")
                (context / recipe.snippet_filename).write_text(recipe.snippet_source, "utf-8")
                code, text, took, timed_out = self._exec(
                    [self.engine, "build", "-t", tag, str(context)], self.build_timeout)
                if timed_out:
                    return BuildOutcome("build", "timeout", None, text + "\n[build timed out]", took, key)
                if code != 0:
                    return BuildOutcome("build", "failure", code, text or f"build exited with code {code}", took, key)
                code, text, took, timed_out = self._exec(
                    [self.engine, "run", "--name", tag, tag], self.run_timeout)
                if timed_out:
                    return BuildOutcome("run", "timeout", None, text + "\n[run timed out]", took, key)
                assert code is not None
                return finish_run(key, code, text if text or code == 0 else f"exited with code {code}", took)
            finally:
                self._cleanup(tag)
                shutil.rmtree(context, ignore_errors=True)


# -- simulated engine ------------------------------------------------------------


def _h(*parts: str) -> int:
    return int.from_bytes(hashlib.sha256("|".join(parts).encode()).digest()[:4], "big")


class SimulatedBackend:
    """Deterministic stand-in for a container engine, driven by a World.

    Build logs mimic the classic docker builder running pip; run logs mimic
    the interpreter's tracebacks, in Python 2 wording on 2.7.
    """

    kind = "simulated"

    def __init__(self, world: World, build_timeout: float = BUILD_TIMEOUT_SECONDS,
                 run_timeout: float = RUN_TIMEOUT_SECONDS, concurrency: int = DEFAULT_CONCURRENCY) -> None:
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.world = world
        self.build_timeout = build_timeout
        self.run_timeout = run_timeout
        self.concurrency = concurrency
        self._slots = threading.BoundedSemaphore(concurrency)
        self._lock = threading.Lock()
        self.validations = 0

    def validate(self, recipe: BuildRecipe) -> BuildOutcome:
        with self._slots:
            with self._lock:
                self.validations += 1
            return self._validate(recipe)

    def _validate(self, recipe: BuildRecipe) -> BuildOutcome:
        cand = recipe.candidate
        key = cand.canonical_key
        program = self.world.program_for(recipe.snippet_source)
        steps = 5 + len(cand.pins)
        lines = [f"Sending build context to Docker daemon  {2048 + len(recipe.snippet_source)}B",
                 f"Step 1/{steps} : FROM python:{cand.interpreter.series}",
                 f" ---> {_h(cand.interpreter.series):012x}",
                 f"Step 2/{steps} : WORKDIR /app",
                 f"Step 3/{steps} : RUN [\"pip\",\"install\",\"--upgrade\",\"pip\"]",
                 "Successfully installed pip-20.3.4" if cand.interpreter.series == "2.7" else
                 "Successfully installed pip-21.3.1"]
        duration = 2.0
        installed: list[ModuleRequirement] = []
        for step, pin in enumerate(cand.pins, start=4):
            duration += 4.0
            lines.append(f'Step {step}/{steps} : RUN ["pip","install","--trusted-host","pypi.python.org",'
                         f'"--default-timeout={recipe.pip_timeout_seconds}","{pin.install_name}=={pin.version}"]')
            lines.append(f" ---> Running in {_h(key, pin.install_name):012x}")
            failure = self._install(pin, cand.interpreter, installed)
            if failure:
                lines.extend(failure)
                lines.append(f"The command 'pip install --trusted-host pypi.python.org --default-timeout="
                             f"{recipe.pip_timeout_seconds} {pin.install_name}=={pin.version}' "
                             "returned a non-zero code: 1")
                if duration > self.build_timeout:
                    return BuildOutcome("build", "timeout", None, "\n".join(lines), self.build_timeout, key)
                return BuildOutcome("build", "failure", 1, "\n".join(lines), duration, key)
            lines.append(f"Collecting {pin.install_name}=={pin.version}")
            lines.append(f"Installing collected packages: {pin.install_name}")
            lines.append(f"Successfully installed {pin.install_name}-{pin.version}")
            installed.append(pin)
        lines.append(f"Step {steps - 1}/{steps} : COPY {recipe.snippet_filename} /app")
        lines.append(f"Step {steps}/{steps} : CMD [\"python\", \"/app/{recipe.snippet_filename}\"]")
        lines.append(f"Successfully built {_h(key):012x}")
        lines.append(f"Successfully tagged {recipe.container_tag}:latest")
        if duration > self.build_timeout:
            return BuildOutcome("build", "timeout", None, "\n".join(lines), self.build_timeout, key)
        return self._run(program, cand, recipe)

    # build phase

    def _install(self, pin: ModuleRequirement, interp: InterpreterVersion,
                 installed: Sequence[ModuleRequirement]) -> list[str] | None:
        name, version = pin.install_name, pin.version or ""
        req = f"{name}=={version}"
        try:
            Version(version)
        except InvalidVersion:
            return [f"ERROR: Invalid requirement: '{req}'"]
        doc = self.world.document(name)
        usable: list[str] = []
        if doc is not None:
            catalog = catalog_from_document(name, doc)
            usable = [r.version for r in catalog.releases
                      if not r.yanked and requires_satisfied(r.requires_interpreter, interp.patch_release)]
        if version not in usable:
            listing = ", ".join(usable) if usable else "none"
            return [f"ERROR: Could not find a version that satisfies the requirement {req} (from versions: {listing})",
                    f"ERROR: No matching distribution found for {req}"]
        for rule in self.world.conflicts:
            for other in installed:
                pair = self._conflict(rule, pin, other) or self._conflict(rule, other, pin)
                if pair:
                    first, second = pair
                    return [f"ERROR: Cannot install {first.install_name}=={first.version} and "
                            f"{second.install_name}=={second.version} because these package versions have "
                            "conflicting dependencies.",
                            "",
                            "The conflict is caused by:",
                            f"    {first.install_name} {first.version} depends on "
                            f"{second.install_name}!={second.version}",
                            f"    The user requested {second.install_name}=={second.version}",
                            "",
                            "ERROR: ResolutionImpossible: for help visit "
                            "https://pip.pypa.io/en/latest/topics/dependency-resolution/#dealing-with-dependency-conflicts"]
        return None

    @staticmethod
    def _conflict(rule: dict, a: ModuleRequirement, b: ModuleRequirement
                  ) -> tuple[ModuleRequirement, ModuleRequirement] | None:
        if (a.install_name == rule["first"] and a.version in rule["first_versions"]
                and b.install_name == rule["second"] and b.version in rule["second_versions"]):
            return a, b
        return None

    # run phase

    def _run(self, program: dict, cand: EnvironmentCandidate, recipe: BuildRecipe) -> BuildOutcome:
        key = cand.canonical_key
        series = cand.interpreter.series
        py2 = series == "2.7"
        source_lines = recipe.snippet_source.splitlines()
        run_seconds = float(program.get("run_seconds", 1.0))
        if run_seconds > self.run_timeout:
            return BuildOutcome("run", "timeout", None, "value: 1\n[run timed out]", self.run_timeout, key)

        def line_of(import_name: str) -> tuple[int, str]:
            pattern = re.compile(rf"^\s*(?:import|from)\s+{re.escape(import_name)}\b")
            for i, text in enumerate(source_lines, start=1):
                if pattern.match(text):
                    return i, text.strip()
            return 1, f"import {import_name}"

        if series not in program.get("syntax", [series]):
            number, text = self._syntax_line(source_lines)
            log_text = "\n".join([f'  File "/app/{recipe.snippet_filename}", line {number}', f"    {text}",
                                  "    ^", "SyntaxError: invalid syntax"])
            return BuildOutcome("run", "failure", 1, log_text, 0.3, key)

        site = f"/usr/local/lib/python{series}/site-packages"
        for req in program.get("requires", []):
            pin = cand.pin_for(req["install"])
            if pin is None:
                pin = next((p for p in cand.pins if p.import_name == req["import"]), None)
            imp = req["import"]
            via = req.get("via")
            if via:
                number, text = line_of(via)
                frame = [f'  File "/app/{recipe.snippet_filename}", line {number}, in <module>', f"    {text}",
                         f'  File "{site}/{via}/__init__.py", line 3, in <module>', f"    import {imp}"]
            else:
                number, text = line_of(imp)
                frame = [f'  File "/app/{recipe.snippet_filename}", line {number}, in <module>', f"    {text}"]
            if pin is None:
                message = f"ImportError: No module named {imp}" if py2 else \
                    f"ModuleNotFoundError: No module named '{imp}'"
                return self._fail(key, frame, message)
            if pin.version not in req.get("good", {}).get(series, []):
                symbol = req.get("symbol") or f"feature_{_h(imp, pin.version or '') % 97}"
                kind = req.get("failure") or ("attribute" if _h(imp, pin.version or "", "kind") % 3 == 0 else "import")
                inner = [f'  File "{site}/{imp}/__init__.py", line {5 + _h(imp) % 40}, in <module>']
                if kind == "attribute":
                    message = (f"AttributeError: 'module' object has no attribute '{symbol}'" if py2 else
                               f"AttributeError: module '{imp}' has no attribute '{symbol}'")
                    inner.append(f"    {imp}.{symbol}()")
                else:
                    message = (f"ImportError: cannot import name {symbol}" if py2 else
                               f"ImportError: cannot import name '{symbol}' from '{imp}' ({site}/{imp}/__init__.py)")
                    inner.append(f"    from {imp}.core import {symbol}")
                return self._fail(key, frame + inner, message)

        runnable = program.get("runnable")
        if runnable and key not in runnable:
            return self._fail(key, [f'  File "/app/{recipe.snippet_filename}", line {len(source_lines)}, in <module>',
                                    "    main()"], "RuntimeError: unexpected result", run_seconds)
        if program.get("nonzero_exit"):
            return finish_run(key, 1, "value: 1\nTraceback (most recent call last):\n"
                              f'  File "/app/{recipe.snippet_filename}", line {len(source_lines)}, in <module>\n'
                              "ValueError: bad input", run_seconds)
        return finish_run(key, 0, "value: 1", run_seconds)

    @staticmethod
    def _syntax_line(source_lines: list[str]) -> tuple[int, str]:
        for i, text in enumerate(source_lines, start=1):
            if re.search(r'print\s+["\']|f"|f\'|except\s+\w+\s*,', text):
                return i, text.strip()
        return 1, source_lines[0].strip() if source_lines else ""

    @staticmethod
    def _fail(key: str, frames: list[str], message: str, seconds: float = 0.5) -> BuildOutcome:
        text = "\n".join(["Traceback (most recent call last):", *frames, message])
        return BuildOutcome("run", "failure", 1, text, seconds, key)


# -- entry points -----------------------------------------------------------------


def validate(recipe: BuildRecipe, backend: ValidatorBackend) -> BuildOutcome:
    return backend.validate(recipe)


def cancelled(recipe: BuildRecipe) -> BuildOutcome:
    return BuildOutcome("build", "cancelled", None, "cancelled: a sibling candidate already succeeded", 0.0,
                        recipe.candidate.canonical_key)


def validate_parallel(recipes: Sequence[BuildRecipe], backend: ValidatorBackend,
                      early_cancel: bool = True) -> list[BuildOutcome]:
    """Validate concurrently, bounded by the backend's cap; results follow ``recipes`` order.

    With ``early_cancel``, recipes not yet started when one succeeds are
    reported as cancelled instead of run.
    """
    if not recipes:
        return []
    tags = [r.container_tag for r in recipes]
    if len(set(tags)) != len(tags):
        raise ValueError("recipes must have distinct container tags")
    results: list[BuildOutcome | None] = [None] * len(recipes)
    with ThreadPoolExecutor(max_workers=min(backend.concurrency, len(recipes))) as pool:
        futures: dict[Future, int] = {pool.submit(backend.validate, r): i for i, r in enumerate(recipes)}
        pending = set(futures)
        try:
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    if fut.cancelled():
                        continue
                    outcome = fut.result()
                    results[futures[fut]] = outcome
                    if early_cancel and outcome.status == "success":
                        for other in pending:
                            other.cancel()
        except EngineUnavailable:
            for fut in futures:
                fut.cancel()
            raise
    return [res if res is not None else cancelled(recipes[i]) for i, res in enumerate(results)]
