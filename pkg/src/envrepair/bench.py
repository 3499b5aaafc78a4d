"""Scoring, per-run corpus reports and the cumulative fix curve across runs."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .inspector import SourceFile
from .loop import RepairResult
from .models import BuildOutcome
from .triage import critical_classes_in

log = logging.getLogger(__name__)


def score_outcome(outcome: BuildOutcome, mode: str = "strict") -> str:
    """``fixed`` when the run finished without a critical error.

    Strict mode also needs exit code 0; lenient mode accepts any exit code.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown scoring mode {mode!r}")
    if outcome.phase != "run" or outcome.status in ("timeout", "cancelled") or outcome.exit_code is None:
        return "unfixed"
    if critical_classes_in(outcome.log):
        return "unfixed"
    if mode == "strict" and outcome.exit_code != 0:
        return "unfixed"
    return "fixed"


@dataclass(frozen=True)
class FileResult:
    file_id: str
    status: str
    iterations: int
    wall_time_seconds: float
    winning_key: str | None = None
    lenient_key: str | None = None

    def fixed(self, lenient: bool = False) -> bool:
        return self.status == "fixed" or (lenient and self.lenient_key is not None)

    @classmethod
    def from_result(cls, file_id: str, result: RepairResult) -> FileResult:
        lenient = result.lenient_candidate.canonical_key if result.lenient_candidate else None
        return cls(file_id, result.status, result.iterations_used, result.wall_time_seconds,
                   result.winning_key, lenient)


@dataclass(frozen=True)
class TimingStats:
    mean: float | None
    q1: float | None
    q3: float | None

    @property
    def iqr(self) -> float | None:
        return None if self.q1 is None or self.q3 is None else self.q3 - self.q1


@dataclass(frozen=True)
class RunReport:
    corpus_id: str
    run_index: int
    per_file: tuple[FileResult, ...]
    seed: int = 0

    @property
    def totals(self) -> dict[str, int]:
        out = {"fixed": 0, "unfixed": 0, "aborted": 0}
        for f in self.per_file:
            out[f.status] += 1
        return out

    def fixed_ids(self, lenient: bool = False) -> set[str]:
        return {f.file_id for f in self.per_file if f.fixed(lenient)}

    @property
    def timing(self) -> TimingStats:
        times = [f.wall_time_seconds for f in self.per_file if f.status == "fixed"]
        if not times:
            return TimingStats(None, None, None)
        q1, q3 = np.percentile(times, [25, 75])
        return TimingStats(float(np.mean(times)), float(q1), float(q3))

    def records(self) -> list[dict]:
        base = {"corpus_id": self.corpus_id, "run_index": self.run_index, "seed": self.seed}
        return [{**base, "type": "file", "file_id": f.file_id, "status": f.status, "iterations": f.iterations,
                 "wall_time_seconds": round(f.wall_time_seconds, 4), "winning_key": f.winning_key,
                 "lenient_key": f.lenient_key} for f in self.per_file]

    def summary_record(self) -> dict:
        t = self.timing
        return {"type": "run", "corpus_id": self.corpus_id, "run_index": self.run_index, "seed": self.seed,
                **self.totals, "lenient_fixed": len(self.fixed_ids(lenient=True)),
                "fix_time_mean": t.mean, "fix_time_q1": t.q1, "fix_time_q3": t.q3, "fix_time_iqr": t.iqr}


@dataclass(frozen=True)
class CumulativeReport:
    runs: int
    unique_fixed_keys_by_prefix: tuple[int, ...]

    @classmethod
    def from_runs(cls, reports: Sequence[RunReport], lenient: bool = False) -> CumulativeReport:
        seen: set[str] = set()
        curve = []
        for report in sorted(reports, key=lambda r: r.run_index):
            seen |= report.fixed_ids(lenient)
            curve.append(len(seen))
        return cls(len(reports), tuple(curve))


RepairOne = Callable[[SourceFile, int], RepairResult]


def run_corpus(files: Sequence[Path], repair_one: RepairOne, runs: int = 1, jobs: int = 1, base_seed: int = 0,
               corpus_id: str = "corpus") -> tuple[list[RunReport], CumulativeReport]:
    """Repair every file ``runs`` times; run ``i`` uses seed ``base_seed + i``."""
    if not files:
        raise ValueError("the corpus has no source files")
    if runs < 1 or jobs < 1:
        raise ValueError("runs and jobs must be >= 1")
    sources = [(Path(p).stem, SourceFile.read(p)) for p in files]
    reports = []
    for run_index in range(runs):
        seed = base_seed + run_index

        def one(item: tuple[str, SourceFile]) -> FileResult:
            file_id, source = item
            return FileResult.from_result(file_id, repair_one(source, seed))

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_file = tuple(pool.map(one, sources))
        reports.append(RunReport(corpus_id, run_index, per_file, seed))
        log.info("run %d: %s", run_index, reports[-1].totals)
    return reports, CumulativeReport.from_runs(reports)


def summary_table(reports: Sequence[RunReport], cumulative: CumulativeReport) -> str:
    def fmt(x: float | None) -> str:
        return "-" if x is None else f"{x:.2f}"

    rows = [f"{'run':>4} {'seed':>6} {'fixed':>6} {'unfixed':>8} {'aborted':>8} {'lenient':>8} "
            f"{'mean_s':>8} {'iqr_s':>8} {'cumul':>6}"]
    for report, cum in zip(reports, cumulative.unique_fixed_keys_by_prefix):
        t = report.totals
        rows.append(f"{report.run_index:>4} {report.seed:>6} {t['fixed']:>6} {t['unfixed']:>8} {t['aborted']:>8} "
                    f"{len(report.fixed_ids(True)):>8} {fmt(report.timing.mean):>8} {fmt(report.timing.iqr):>8} "
                    f"{cum:>6}")
    return "\n".join(rows) + "\n"


def write_reports(out_dir: Path, reports: Sequence[RunReport], cumulative: CumulativeReport) -> dict[str, Path]:
    """Line-delimited per-file and per-run records, the cumulative curve and a text table."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"files": out_dir / "files.jsonl", "runs": out_dir / "runs.jsonl",
             "cumulative": out_dir / "cumulative.json", "summary": out_dir / "summary.txt"}
    with paths["files"].open("w", encoding="utf-8") as fh:
        for report in reports:
            for rec in report.records():
                fh.write(json.dumps(rec) + "\n")
    with paths["runs"].open("w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.summary_record()) + "\n")
    paths["cumulative"].write_text(json.dumps({
        "runs": cumulative.runs,
        "unique_fixed_by_prefix": list(cumulative.unique_fixed_keys_by_prefix),
        "unique_lenient_by_prefix": list(CumulativeReport.from_runs(reports, lenient=True)
                                         .unique_fixed_keys_by_prefix),
    }, indent=2), "utf-8")
    paths["summary"].write_text(summary_table(reports, cumulative), "utf-8")
    return paths
