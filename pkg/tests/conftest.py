from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

import pytest

from envrepair.inspector import NameMapping
from envrepair.llm.gateway import ModelGateway
from envrepair.llm.stubs import DeterministicStub
from envrepair.models import BuildOutcome
from envrepair.registry import Retriever
from envrepair.world import World, WorldSource, index_document

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
KERAS_TF_WORLD = FIXTURES / "keras_tf"
GOLDEN = HERE / "golden"
LOG_CORPUS = FIXTURES / "logs"

# Fixed clock so window filtering never depends on the day the suite runs.
NOW = datetime(2024, 6, 1, tzinfo=timezone.utc)


def utc(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%d").replace(tzinfo=timezone.utc)


def failed_run(log: str, exit_code: int = 1) -> BuildOutcome:
    return BuildOutcome("run", "failure", exit_code, log, 0.1, "3.6|")


def failed_build(log: str) -> BuildOutcome:
    return BuildOutcome("build", "failure", 1, log, 0.1, "3.6|")


def world_retriever(world: World) -> Retriever:
    return Retriever(WorldSource(world))


def tiny_world(packages: dict[str, list[tuple[str, str]]], program: dict | None = None) -> World:
    """A world whose packages have dated releases and no interpreter constraints."""
    registry = {name: index_document(name, [(v, utc(d), None) for v, d in rels]) for name, rels in packages.items()}
    programs = {"p": program} if program else {}
    return World(registry, programs)


@pytest.fixture
def det_gateway() -> ModelGateway:
    return ModelGateway(DeterministicStub(), seed=0)


@pytest.fixture
def mapping() -> NameMapping:
    return NameMapping.default()


@pytest.fixture(scope="session")
def keras_tf_world() -> World:
    return World.load(KERAS_TF_WORLD)


# -- acceptance reporting ---------------------------------------------------------

_verdicts: dict[int, str] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        verdict = "SKIP" if report.skipped else "PASS" if report.passed else "FAIL"
        if _verdicts.get(marker) != "FAIL":
            _verdicts[marker] = verdict


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark:
        outcome.get_result().criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_verdicts):
        terminalreporter.write_line(f"{_verdicts[n]} criterion {n}")
