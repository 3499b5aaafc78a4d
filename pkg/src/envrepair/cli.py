"""Command-line entry points: ``envrepair repair FILE`` and ``envrepair bench DIR``.

Exit status for ``repair``: 0 fixed, 1 unfixed, 2 usage error, 3 aborted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .bench import CumulativeReport, run_corpus, summary_table, write_reports
from .candidates import MAX_RANGE
from .dockerfile import BuildRecipe, emit
from .inspector import NameMapping, SourceFile
from .llm.backends import BACKEND_URL_ENV, backend_from_url
from .llm.gateway import ModelGateway
from .loop import LoopConfig, RepairResult, repair
from .registry import CACHE_DIR_ENV, PYPI_URL, FixtureSource, PyPISource, Retriever
from .validator import ContainerBackend, SimulatedBackend, ValidatorBackend
from .world import WORLD_FILE, World, WorldSource

EXIT_FIXED, EXIT_UNFIXED, EXIT_USAGE, EXIT_ABORTED = 0, 1, 2, 3


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="gemma2", help="model name sent to the backend")
    p.add_argument("--temp", type=float, default=0.7, help="sampling temperature in [0, 1]")
    p.add_argument("--loop", type=int, default=10, help="repair cycles per file (>= 1)")
    p.add_argument("--range", type=int, default=1, help=f"interpreter neighbours each side (0..{MAX_RANGE})")
    p.add_argument("--rag", type=_bool, nargs="?", const=True, default=True,
                   help="ground version choices in registry metadata (true/false)")
    p.add_argument("--backend-url", default=None,
                   help=f"model server URL, stub://deterministic, stub://stochastic or transcript:///dir "
                        f"(env {BACKEND_URL_ENV})")
    p.add_argument("--validator", choices=("container", "simulated"), default="container")
    p.add_argument("--fixtures", type=Path, default=None,
                   help=f"directory with {WORLD_FILE} and/or registry/<name>.json documents")
    p.add_argument("--out", type=Path, default=Path("envrepair-out"), help="report directory")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--jobs", type=int, default=1, help="files repaired concurrently")
    p.add_argument("--registry-url", default=PYPI_URL, help="package index base URL")
    p.add_argument("--cache-dir", type=Path, default=None, help=f"metadata cache (env {CACHE_DIR_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="envrepair", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    rep = sub.add_parser("repair", help="repair one source file")
    rep.add_argument("file", type=Path)
    _common(rep)
    bench = sub.add_parser("bench", help="repair every .py file in a directory, several times")
    bench.add_argument("corpus", type=Path)
    bench.add_argument("--runs", type=int, default=1)
    _common(bench)
    return parser


@dataclass
class Components:
    """Everything a repair needs except the per-run model backend."""

    world: World | None
    retriever: Retriever
    validator: ValidatorBackend
    mapping: NameMapping

    def gateway(self, args: argparse.Namespace, seed: int) -> ModelGateway:
        knowledge = self.world.knowledge if self.world else None
        backend = backend_from_url(args.backend_url, seed, knowledge)
        return ModelGateway(backend, args.model, args.temp, seed)


def _components(args: argparse.Namespace, parser: argparse.ArgumentParser) -> Components:
    world = None
    fixtures = args.fixtures
    if fixtures is not None:
        if not fixtures.is_dir():
            parser.error(f"fixtures directory not found: {fixtures}")
        if (fixtures / WORLD_FILE).is_file():
            world = World.load(fixtures)
    if args.validator == "simulated" and world is None:
        parser.error(f"--validator simulated needs --fixtures pointing at a directory with {WORLD_FILE}")

    if fixtures is not None and (fixtures / "registry").is_dir():
        retriever = Retriever(FixtureSource(fixtures / "registry"))
    elif world is not None:
        retriever = Retriever(WorldSource(world))
    else:
        cache = args.cache_dir or os.environ.get(CACHE_DIR_ENV) or Path.home() / ".cache" / "envrepair"
        retriever = Retriever(PyPISource(args.registry_url), cache_dir=cache)

    validator: ValidatorBackend = SimulatedBackend(world) if args.validator == "simulated" and world \
        else ContainerBackend()
    return Components(world, retriever, validator, NameMapping.default())


def _config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> LoopConfig:
    if args.loop < 1:
        parser.error(f"--loop must be >= 1, got {args.loop}")
    if not 0 <= args.range <= MAX_RANGE:
        parser.error(f"--range must lie in 0..{MAX_RANGE}, got {args.range}")
    if not 0.0 <= args.temp <= 1.0:
        parser.error(f"--temp must lie in [0, 1], got {args.temp}")
    if args.jobs < 1:
        parser.error(f"--jobs must be >= 1, got {args.jobs}")
    return LoopConfig(args.loop, args.range, args.rag, args.temp, args.model)


def _describe(result: RepairResult) -> str:
    lines = [f"status: {result.status}", f"iterations: {result.iterations_used}",
             f"wall time: {result.wall_time_seconds:.2f}s"]
    if result.winning_key:
        lines.append(f"environment: {result.winning_key}")
    if result.error:
        lines.append(f"error: {result.error}")
    for w in result.warnings:
        lines.append(f"note: {w}")
    return "\n".join(lines)


def cmd_repair(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if not args.file.is_file():
        parser.error(f"source file not found: {args.file}")
    cfg = _config(args, parser)
    comps = _components(args, parser)
    args.out.mkdir(parents=True, exist_ok=True)
    source = SourceFile.read(args.file)
    result = repair(source, cfg, comps.gateway(args, args.seed), comps.retriever, comps.validator, comps.mapping,
                    trace_path=args.out / "trace.jsonl", run_id=args.file.stem)
    (args.out / "result.json").write_text(json.dumps(result.to_json(), indent=2), "utf-8")
    if result.winning_candidate is not None:
        (args.out / "Dockerfile").write_text(emit(BuildRecipe(result.winning_candidate)), "utf-8")
    print(_describe(result))
    return {"fixed": EXIT_FIXED, "unfixed": EXIT_UNFIXED}.get(result.status, EXIT_ABORTED)


def cmd_bench(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if not args.corpus.is_dir():
        parser.error(f"corpus directory not found: {args.corpus}")
    files = sorted(args.corpus.glob("*.py"))
    if not files:
        parser.error(f"no .py files in {args.corpus}")
    if args.runs < 1:
        parser.error(f"--runs must be >= 1, got {args.runs}")
    cfg = _config(args, parser)
    comps = _components(args, parser)
    traces = args.out / "traces"

    def repair_one(source: SourceFile, seed: int) -> RepairResult:
        stem = Path(source.path).stem
        return repair(source, cfg, comps.gateway(args, seed), comps.retriever, comps.validator, comps.mapping,
                      trace_path=traces / f"run{seed - args.seed}" / f"{stem}.jsonl",
                      run_id=f"{stem}-s{seed}")

    reports, cumulative = run_corpus(files, repair_one, args.runs, args.jobs, args.seed, args.corpus.name)
    write_reports(args.out, reports, cumulative)
    from .plots import plot_cumulative, plot_fix_times

    plot_cumulative(cumulative, args.out / "cumulative.png", CumulativeReport.from_runs(reports, lenient=True),
                    upper_bound=len(files))
    plot_fix_times(reports, args.out / "fix_times.png")
    print(summary_table(reports, cumulative), end="")
    return EXIT_FIXED


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "repair":
        return cmd_repair(args, parser)
    return cmd_bench(args, parser)


if __name__ == "__main__":
    sys.exit(main())
