"""Dataset ingestion, batch evaluation, and report rendering.

A dataset is line-delimited JSON, one problem per line:
``{"id": ..., "description": ..., "answer": ..., "dataset": ...,
"difficulty": ...}``. ``question`` is accepted as an alias for
``description``; ``answer`` is a number or the literal ``infeasible`` /
``unbounded``. Malformed lines are collected, not fatal.

Code pass rate counts a script as passing when it executed without runtime
error or timeout; output that executed cleanly but yielded no parseable
objective still counts as a pass (and as a non-match for accuracy).
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyDataset, OptiTreeError
from .execution import ExecStatus, GroundTruth
from .pipeline import PipelineConfig, ProblemInstance, SolveOutcome, solve_problem
from .tree import ModelingTree

CODE_FAIL_STATUSES = frozenset({ExecStatus.RUNTIME_ERROR, ExecStatus.TIMEOUT})


@dataclass(frozen=True)
class MalformedLine:
    line_no: int
    reason: str


@dataclass(frozen=True)
class DatasetLoad:
    instances: tuple[ProblemInstance, ...]
    malformed: tuple[MalformedLine, ...]


def load_dataset(document: str) -> DatasetLoad:
    """Parse a line-delimited dataset; raises EmptyDataset when nothing
    usable survives."""
    instances: list[ProblemInstance] = []
    malformed: list[MalformedLine] = []
    for line_no, line in enumerate(document.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            malformed.append(MalformedLine(line_no, f"not JSON: {exc}"))
            continue
        if not isinstance(record, dict):
            malformed.append(MalformedLine(line_no, "record is not an object"))
            continue
        description = record.get("description", record.get("question", ""))
        if not str(description).strip():
            malformed.append(MalformedLine(line_no, "missing description"))
            continue
        if "answer" not in record or record["answer"] is None:
            malformed.append(MalformedLine(line_no, "missing answer"))
            continue
        try:
            truth = GroundTruth.parse(record["answer"])
        except (ValueError, TypeError) as exc:
            malformed.append(MalformedLine(line_no, f"bad answer: {exc}"))
            continue
        instances.append(
            ProblemInstance(
                id=str(record.get("id", f"p{line_no:05d}")),
                description=str(description),
                ground_truth=truth,
                dataset=str(record.get("dataset", "")),
                difficulty=(
                    str(record["difficulty"])
                    if record.get("difficulty") is not None
                    else None
                ),
            )
        )
    if not instances:
        raise EmptyDataset(
            f"no usable problem instances ({len(malformed)} malformed lines)"
        )
    return DatasetLoad(instances=tuple(instances), malformed=tuple(malformed))


@dataclass(frozen=True)
class ProblemSummary:
    problem_id: str
    dataset: str
    difficulty: str | None
    matched: bool
    code_passed: bool
    status: str
    objective: float | None
    depth: int
    halted_at_root: bool
    search_s: float
    modeling_s: float
    exec_s: float
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "dataset": self.dataset,
            "difficulty": self.difficulty,
            "matched": self.matched,
            "code_passed": self.code_passed,
            "status": self.status,
            "objective": self.objective,
            "depth": self.depth,
            "halted_at_root": self.halted_at_root,
            "search_s": self.search_s,
            "modeling_s": self.modeling_s,
            "exec_s": self.exec_s,
            "error": self.error,
        }


@dataclass(frozen=True)
class DifficultyStats:
    total: int
    accuracy: float


@dataclass(frozen=True)
class EvalReport:
    per_problem: tuple[ProblemSummary, ...]
    accuracy: float
    code_pass_rate: float
    coverage_rate: float
    greatest_depth: int
    mean_search_s: float
    mean_modeling_s: float
    by_difficulty: dict[str, DifficultyStats] | None = None

    def __post_init__(self) -> None:
        for name in ("accuracy", "code_pass_rate", "coverage_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} {value} outside [0, 1]")
        if self.greatest_depth < 0:
            raise ValueError("greatest_depth must be >= 0")

    def to_record(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "code_pass_rate": self.code_pass_rate,
            "coverage_rate": self.coverage_rate,
            "greatest_depth": self.greatest_depth,
            "mean_search_s": self.mean_search_s,
            "mean_modeling_s": self.mean_modeling_s,
            "by_difficulty": (
                None
                if self.by_difficulty is None
                else {
                    k: {"total": v.total, "accuracy": v.accuracy}
                    for k, v in sorted(self.by_difficulty.items())
                }
            ),
            "per_problem": [s.to_record() for s in self.per_problem],
        }

    @classmethod
    def from_record(cls, record: dict) -> "EvalReport":
        summaries = tuple(
            ProblemSummary(
                problem_id=s["problem_id"],
                dataset=s["dataset"],
                difficulty=s["difficulty"],
                matched=s["matched"],
                code_passed=s["code_passed"],
                status=s["status"],
                objective=s["objective"],
                depth=s["depth"],
                halted_at_root=s["halted_at_root"],
                search_s=s["search_s"],
                modeling_s=s["modeling_s"],
                exec_s=s["exec_s"],
                error=s.get("error"),
            )
            for s in record["per_problem"]
        )
        by_difficulty = record.get("by_difficulty")
        if by_difficulty is not None:
            by_difficulty = {
                k: DifficultyStats(total=v["total"], accuracy=v["accuracy"])
                for k, v in by_difficulty.items()
            }
        return cls(
            per_problem=summaries,
            accuracy=record["accuracy"],
            code_pass_rate=record["code_pass_rate"],
            coverage_rate=record["coverage_rate"],
            greatest_depth=record["greatest_depth"],
            mean_search_s=record["mean_search_s"],
            mean_modeling_s=record["mean_modeling_s"],
            by_difficulty=by_difficulty,
        )


def summarize_outcome(
    problem: ProblemInstance, outcome: SolveOutcome
) -> ProblemSummary:
    return ProblemSummary(
        problem_id=problem.id,
        dataset=problem.dataset,
        difficulty=problem.difficulty,
        matched=bool(outcome.matched),
        code_passed=outcome.exec.status not in CODE_FAIL_STATUSES,
        status=outcome.exec.status.value,
        objective=outcome.exec.objective,
        depth=outcome.trace.depth,
        halted_at_root=outcome.trace.halted_at_root,
        search_s=outcome.timings.search_s,
        modeling_s=outcome.timings.modeling_s,
        exec_s=outcome.timings.exec_s,
        error=outcome.error,
    )


def _failure_summary(problem: ProblemInstance, exc: Exception) -> ProblemSummary:
    return ProblemSummary(
        problem_id=problem.id,
        dataset=problem.dataset,
        difficulty=problem.difficulty,
        matched=False,
        code_passed=False,
        status="error",
        objective=None,
        depth=0,
        halted_at_root=True,
        search_s=0.0,
        modeling_s=0.0,
        exec_s=0.0,
        error=str(exc),
    )


def report_from_summaries(
    summaries: Sequence[ProblemSummary],
) -> EvalReport:
    """Pure fold from per-problem summaries to the aggregate report."""
    total = len(summaries)
    if total == 0:
        raise EmptyDataset("cannot aggregate an empty outcome list")
    matched = sum(1 for s in summaries if s.matched)
    passed = sum(1 for s in summaries if s.code_passed)
    covered = sum(1 for s in summaries if not s.halted_at_root)
    by_difficulty = None
    if any(s.difficulty for s in summaries):
        by_difficulty = {}
        for diff in sorted({s.difficulty for s in summaries if s.difficulty}):
            group = [s for s in summaries if s.difficulty == diff]
            by_difficulty[diff] = DifficultyStats(
                total=len(group),
                accuracy=sum(1 for s in group if s.matched) / len(group),
            )
    return EvalReport(
        per_problem=tuple(summaries),
        accuracy=matched / total,
        code_pass_rate=passed / total,
        coverage_rate=covered / total,
        greatest_depth=max(s.depth for s in summaries),
        mean_search_s=sum(s.search_s for s in summaries) / total,
        mean_modeling_s=sum(s.modeling_s for s in summaries) / total,
        by_difficulty=by_difficulty,
    )


def evaluate(
    tree: ModelingTree,
    instances: Iterable[ProblemInstance],
    config: PipelineConfig,
    jobs: int = 1,
) -> EvalReport:
    """Solve every instance against a read-only tree and aggregate.

    Fans out over a thread pool of ``jobs`` workers; per-problem failures
    become error summaries, never exceptions.
    """
    problems = list(instances)
    if not problems:
        raise EmptyDataset("no instances to evaluate")
    snapshot = tree.snapshot()

    def run_one(problem: ProblemInstance) -> ProblemSummary:
        try:
            outcome = solve_problem(snapshot, problem, config)
        except OptiTreeError as exc:
            return _failure_summary(problem, exc)
        return summarize_outcome(problem, outcome)

    if jobs <= 1:
        summaries = [run_one(p) for p in problems]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(run_one, problems))
    return report_from_summaries(summaries)


def render_report(report: EvalReport, fmt: str = "table") -> str:
    """Deterministic rendering; the json form is the canonical result."""
    if fmt == "json":
        return json.dumps(report.to_record(), ensure_ascii=False, indent=2)
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            [
                "problem_id",
                "dataset",
                "difficulty",
                "matched",
                "code_passed",
                "status",
                "objective",
                "depth",
                "halted_at_root",
                "search_s",
                "modeling_s",
                "exec_s",
                "error",
            ]
        )
        for s in report.per_problem:
            writer.writerow(
                [
                    s.problem_id,
                    s.dataset,
                    s.difficulty or "",
                    int(s.matched),
                    int(s.code_passed),
                    s.status,
                    "" if s.objective is None else s.objective,
                    s.depth,
                    int(s.halted_at_root),
                    s.search_s,
                    s.modeling_s,
                    s.exec_s,
                    s.error or "",
                ]
            )
        return out.getvalue()
    if fmt == "table":
        return _render_table(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _render_table(report: EvalReport) -> str:
    splits = sorted({s.dataset or "(all)" for s in report.per_problem})
    header = (
        f"{'split':<20} {'n':>5} {'accuracy':>9} {'code_pass':>10} "
        f"{'coverage':>9} {'max_depth':>10} {'search_s':>9} {'model_s':>9}"
    )
    lines = [header, "-" * len(header)]

    def row(name: str, group: Sequence[ProblemSummary]) -> str:
        n = len(group)
        acc = sum(1 for s in group if s.matched) / n
        cp = sum(1 for s in group if s.code_passed) / n
        cov = sum(1 for s in group if not s.halted_at_root) / n
        depth = max(s.depth for s in group)
        mean_search = sum(s.search_s for s in group) / n
        mean_model = sum(s.modeling_s for s in group) / n
        return (
            f"{name:<20} {n:>5} {acc:>9.3f} {cp:>10.3f} "
            f"{cov:>9.3f} {depth:>10} {mean_search:>9.3f} {mean_model:>9.3f}"
        )

    for split in splits:
        group = [
            s for s in report.per_problem if (s.dataset or "(all)") == split
        ]
        lines.append(row(split, group))
    if len(splits) > 1:
        lines.append(row("overall", list(report.per_problem)))
    return "\n".join(lines)
