from __future__ import annotations

import json

import pytest

from envrepair.dockerfile import BuildRecipe
from envrepair.errors import EngineUnavailable
from envrepair.inspector import NameMapping, SourceFile
from envrepair.llm.backends import GenerationRequest
from envrepair.llm.gateway import InferredEnvironment, ModelGateway
from envrepair.llm.stubs import DeterministicStub, ScriptedStub, StochasticStub
from envrepair.loop import LoopConfig, RepairResult, merge_stage_a, repair
from envrepair.models import ModuleRequirement
from envrepair.registry import Retriever
from envrepair.validator import SimulatedBackend, validate
from envrepair.world import World, WorldSource, generate_world

from conftest import NOW, KERAS_TF_WORLD


def run(world: World, pid: str, cfg: LoopConfig = LoopConfig(), gateway: ModelGateway | None = None,
        **kw) -> RepairResult:
    src = SourceFile.from_text(world.programs[pid]["source"], f"{pid}.py")
    gateway = gateway or ModelGateway(DeterministicStub(world.knowledge), seed=0)
    return repair(src, cfg, gateway, Retriever(WorldSource(world)), SimulatedBackend(world), now=NOW, **kw)


def series_of(key: str) -> str:
    return key.split("|")[0]


# -- merge -------------------------------------------------------------------------

def test_merge_union(mapping):
    out = merge_stage_a([ModuleRequirement("numpy", "numpy")],
                        InferredEnvironment((("numpy", ""), ("scipy", "")), "3.6"), mapping)
    assert [r.install_name for r in out.requirements] == ["numpy", "scipy"]


def test_merge_dedups_by_install_name(mapping):
    out = merge_stage_a([ModuleRequirement("sklearn", "scikit-learn")],
                        InferredEnvironment((("scikit-learn", ""),), "3.6"), mapping)
    assert [(r.import_name, r.install_name) for r in out.requirements] == [("sklearn", "scikit-learn")]


def test_merge_normalizes_interpreter(mapping):
    out = merge_stage_a([], InferredEnvironment((), "3"), mapping)
    assert out.interpreter.series == "3.6" and out.warning is None
    assert merge_stage_a([], InferredEnvironment((), "3.2"), mapping).warning


def test_merge_ignores_stage_a_versions(mapping):
    out = merge_stage_a([], InferredEnvironment((("keras", "2.0.9"),), "3.6"), mapping)
    assert out.requirements[0].version is None


# -- end to end on fixture worlds ---------------------------------------------------------

def test_keras_tf_world(keras_tf_world):
    res = run(keras_tf_world, "snippet")
    assert res.status == "fixed"
    assert res.winning_key == "3.6|keras==2.0.9;tensorflow==2.4.4"
    assert res.iterations_used <= 10


def test_interpreter_only_program():
    world = World({}, {"p": {"source": "import os\nprint(os.getcwd())\n", "requires": [], "runnable": ["3.6|"]}})
    res = run(world, "p")
    assert res.status == "fixed" and res.iterations_used == 1
    assert res.winning_candidate.pins == () and res.winning_key == "3.6|"


def test_unsatisfiable_world():
    world = generate_world(7, 0, 1)
    res = run(world, "p000")
    keys = res.tried_keys
    assert res.status == "unfixed"
    assert res.iterations_used == 10
    assert len(keys) >= 10 and len(keys) == len(set(keys))


@pytest.mark.parametrize("budget", [1, 3])
def test_budget_respected(budget):
    world = generate_world(8, 0, 1)
    res = run(world, "p000", LoopConfig(loop_budget=budget))
    assert res.iterations_used == budget == len(res.per_iteration_trace)


def test_replay_soundness_and_branch_freeze():
    world = generate_world(21, 12, 3)
    backend = SimulatedBackend(world)
    for pid, prog in world.programs.items():
        res = run(world, pid)
        if res.status == "fixed":
            again = validate(BuildRecipe.for_candidate(res.winning_candidate, "replay", prog["source"]), backend)
            assert again.status == "success"
        for cycle in res.per_iteration_trace:
            for attempt in cycle.attempts:
                assert series_of(attempt["key"]) == attempt["series"]
        per_cycle = [{a["series"] for a in c.attempts} for c in res.per_iteration_trace]
        for earlier, later in zip(per_cycle, per_cycle[1:]):
            assert later <= earlier  # branches only ever close
        assert len(res.tried_keys) == len(set(res.tried_keys))


def test_syntax_error_closes_branch():
    world = World({}, {"p": {"source": "x = 1\n", "syntax": ["3.6"], "requires": [], "runnable": ["3.7|"]}})
    res = run(world, "p")
    first = res.per_iteration_trace[0]
    syntax = {a["series"] for a in first.attempts if a.get("triage", {}).get("class") == "SyntaxError"}
    assert syntax == {"2.7", "3.5", "3.7"}
    assert res.status == "unfixed" and res.warnings


def test_all_branches_closed_stops_early():
    world = World({}, {"p": {"source": "x = 1\n", "syntax": [], "requires": []}})
    res = run(world, "p")
    assert res.status == "unfixed" and res.iterations_used == 1
    assert any("branch closed" in w for w in res.warnings)


def test_lenient_candidate_recorded():
    world = World({}, {"p": {"source": "print(1)\n", "requires": [], "nonzero_exit": True}})
    res = run(world, "p", LoopConfig(range=0))
    assert res.status == "unfixed"
    assert res.lenient_candidate is not None and res.lenient_candidate.canonical_key in res.tried_keys


def test_trace_file(tmp_path, keras_tf_world):
    path = tmp_path / "t" / "trace.jsonl"
    res = run(keras_tf_world, "snippet", trace_path=path)
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["type"] for r in records] == ["cycle"] * res.iterations_used + ["result"]
    assert records[-1]["winning_key"] == res.winning_key
    assert all("key" in a and "series" in a for r in records[:-1] for a in r["attempts"])


def test_inference_failure_falls_back_to_static(keras_tf_world):
    class Mute(DeterministicStub):
        def generate(self, request: GenerationRequest) -> str:
            return "no idea" if request.prompt_id == "infer_file" else super().generate(request)

    res = run(keras_tf_world, "snippet", gateway=ModelGateway(Mute(keras_tf_world.knowledge)))
    assert res.status == "fixed"
    assert any("inference failed" in w for w in res.warnings)


def test_without_retrieval_uses_model_knowledge(keras_tf_world):
    res = run(keras_tf_world, "snippet", LoopConfig(rag=False))
    assert res.status in ("fixed", "unfixed")
    assert res.iterations_used <= 10
    assert len(res.tried_keys) == len(set(res.tried_keys))


def test_without_retrieval_falls_back_to_static_modules(keras_tf_world):
    stub = ScriptedStub({"infer_file": ['{"python_modules": [], "python_version": "3.6"}'],
                         "pick_version_bare": ['{"version": "2.0.9"}', '{"version": "2.4.4"}']})
    res = run(keras_tf_world, "snippet", LoopConfig(rag=False, loop_budget=1, range=0), gateway=ModelGateway(stub))
    keys = res.tried_keys
    assert any("keras==" in k and "tensorflow==" in k for k in keys)


def test_engine_failure_aborts(keras_tf_world):
    class Broken(SimulatedBackend):
        def validate(self, recipe):
            raise EngineUnavailable("daemon not running")

    src = SourceFile.from_text(keras_tf_world.programs["snippet"]["source"])
    res = repair(src, LoopConfig(), ModelGateway(DeterministicStub()), Retriever(WorldSource(keras_tf_world)),
                 Broken(keras_tf_world), now=NOW)
    assert res.status == "aborted" and "EngineUnavailable" in res.error


def test_backend_failure_aborts(keras_tf_world):
    from envrepair.errors import BackendError

    class Offline:
        def generate(self, request):
            raise BackendError("connection refused")

    res = run(keras_tf_world, "snippet", gateway=ModelGateway(Offline()))
    assert res.status == "aborted" and res.iterations_used == 0


def test_config_validation():
    for bad in ({"loop_budget": 0}, {"range": 4}, {"temperature": 1.5}):
        with pytest.raises(ValueError):
            LoopConfig(**bad)


def test_result_invariants():
    with pytest.raises(ValueError):
        RepairResult("fixed", None, 1, 0.0)
    with pytest.raises(ValueError):
        RepairResult("done", None, 1, 0.0)


def test_stochastic_stub_runs_stay_in_budget():
    world = generate_world(5, 8, 2)
    for seed in range(3):
        for pid in world.programs:
            res = run(world, pid, gateway=ModelGateway(StochasticStub(seed, knowledge=world.knowledge), seed=seed))
            assert res.iterations_used <= 10
            assert len(res.tried_keys) == len(set(res.tried_keys))
            if not world.programs[pid]["solvable"]:
                assert res.status != "fixed"
