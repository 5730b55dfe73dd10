"""Pipeline orchestration: tree search, solution generation, tree update.

The search descends from the root, at each level judging the current
node's children against the problem and following the qualifying child of
highest similarity (ties break to the lowest child index). The deepest
accepted node is the maximal subproblem; its modeling thoughts seed code
generation. A failed solve triggers schema distillation and node
expansion, then a re-solve, up to the configured round budget.

All timing reads go through the config's injectable clock so recorded
transcripts replay byte-identically.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .backends import DistilledStatement, EngineBackend
from .errors import (
    JudgmentFailed,
    MalformedStructure,
    UnknownSubtypeName,
)
from .execution import (
    ExecResult,
    ExecStatus,
    GroundTruth,
    MatchPolicy,
    answers_match,
    run_script,
)
from .oracle import SubproblemJudgment
from .schema import ModelingThoughts, NodeSchema
from .tree import ModelingTree, TreeStats

Executor = Callable[[str, float], ExecResult]

# Errors recorded inside an outcome rather than raised out of a solve.
RECORDABLE_ERRORS = (MalformedStructure, UnknownSubtypeName)


@dataclass(frozen=True)
class ProblemInstance:
    """One natural-language problem, optionally with its ground truth."""

    id: str
    description: str
    ground_truth: GroundTruth | None = None
    dataset: str = ""
    difficulty: str | None = None

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError("problem description must be non-empty")


@dataclass(frozen=True)
class Timings:
    search_s: float = 0.0
    modeling_s: float = 0.0
    exec_s: float = 0.0

    def __post_init__(self) -> None:
        for name in ("search_s", "modeling_s", "exec_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class SearchTrace:
    """Root-to-maximal path with per-level judgments."""

    path: tuple[tuple[str, SubproblemJudgment], ...] = ()
    maximal: str | None = None
    depth: int = 0
    halted_at_root: bool = True

    def __post_init__(self) -> None:
        if self.depth != len(self.path):
            raise ValueError("depth must equal the path length")
        if self.halted_at_root != (not self.path):
            raise ValueError("halted_at_root must mirror an empty path")
        if (self.maximal is None) != (not self.path):
            raise ValueError("maximal is present iff the path is non-empty")

    def to_record(self) -> dict:
        return {
            "path": [
                {
                    "node": node_id,
                    "is_subproblem": j.is_subproblem,
                    "similarity": j.similarity,
                    "rationale": j.rationale,
                }
                for node_id, j in self.path
            ],
            "maximal": self.maximal,
            "depth": self.depth,
            "halted_at_root": self.halted_at_root,
        }


@dataclass(frozen=True)
class SolveOutcome:
    problem_id: str
    trace: SearchTrace
    thoughts_used: ModelingThoughts | None
    generated_code: str
    repair_rounds: int
    exec: ExecResult
    matched: bool | None
    timings: Timings
    error: str | None = None

    def to_record(self) -> dict:
        thoughts = None
        if self.thoughts_used is not None:
            thoughts = {
                "steps": [
                    {"tag": s.tag, "text": s.text}
                    for s in self.thoughts_used.steps
                ],
                "code_template": self.thoughts_used.code_template,
                "error_tips": list(self.thoughts_used.error_tips),
            }
        return {
            "problem_id": self.problem_id,
            "trace": self.trace.to_record(),
            "thoughts_used": thoughts,
            "generated_code": self.generated_code,
            "repair_rounds": self.repair_rounds,
            "exec": {
                "status": self.exec.status.value,
                "objective": self.exec.objective,
                "stdout": self.exec.stdout,
                "stderr": self.exec.stderr,
                "wall_time": self.exec.wall_time,
                "used_fallback": self.exec.used_fallback,
            },
            "matched": self.matched,
            "timings": {
                "search_s": self.timings.search_s,
                "modeling_s": self.timings.modeling_s,
                "exec_s": self.timings.exec_s,
            },
            "error": self.error,
        }


def solve_outcome_json(outcome: SolveOutcome) -> str:
    """Canonical JSON form; byte-identical for equal outcomes."""
    return json.dumps(outcome.to_record(), ensure_ascii=False, indent=2)


@dataclass
class PipelineConfig:
    backend: EngineBackend
    executor: Executor = field(default=lambda code, timeout: run_script(code, timeout))
    match_policy: MatchPolicy = field(default_factory=MatchPolicy)
    max_depth: int | None = None
    repair_budget: int = 2
    update_rounds: int = 3
    exec_timeout: float = 60.0
    clock: Callable[[], float] = time.perf_counter

    def __post_init__(self) -> None:
        if self.repair_budget < 0:
            raise ValueError("repair_budget must be >= 0")
        if self.update_rounds < 1:
            raise ValueError("update_rounds must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 when set")


def extract_statement_thoughts(
    problem: ProblemInstance, config: PipelineConfig
) -> DistilledStatement:
    """Distill the problem into a specific category name plus thought list.

    Broad category names are accepted but surface in ``warnings``.
    """
    return config.backend.distill_statement_thoughts(problem.description)


def tree_search(
    tree: ModelingTree,
    problem: ProblemInstance,
    config: PipelineConfig,
    problem_thoughts: str = "",
) -> SearchTrace:
    """Descend to the maximal subproblem of ``problem``.

    Stops at a leaf, when no child qualifies, or at ``config.max_depth``.
    Judgment errors re-raise as JudgmentFailed carrying the partial trace.
    """
    path: list[tuple[str, SubproblemJudgment]] = []
    current = tree.root_id
    while True:
        if config.max_depth is not None and len(path) >= config.max_depth:
            break
        child_ids = tree.children_of(current)
        if not child_ids:
            break
        children = [tree.schema_of(cid) for cid in child_ids]
        try:
            judgments = config.backend.judge_children(
                children,
                problem.description,
                problem_thoughts,
                tree.schema_of(current).problem_type,
            )
        except RECORDABLE_ERRORS as exc:
            raise JudgmentFailed(
                str(exc), partial_trace=_trace_from_path(path)
            ) from exc
        best_index: int | None = None
        for i, judgment in enumerate(judgments):
            if not judgment.is_subproblem:
                continue
            if (
                best_index is None
                or judgment.similarity > judgments[best_index].similarity
            ):
                best_index = i
        if best_index is None:
            break
        current = child_ids[best_index]
        path.append((current, judgments[best_index]))
    return _trace_from_path(path)


def _trace_from_path(
    path: Sequence[tuple[str, SubproblemJudgment]]
) -> SearchTrace:
    return SearchTrace(
        path=tuple(path),
        maximal=path[-1][0] if path else None,
        depth=len(path),
        halted_at_root=not path,
    )


def synthesize_and_model(
    tree: ModelingTree,
    problem: ProblemInstance,
    trace: SearchTrace,
    config: PipelineConfig,
) -> str:
    """Generate solver code from the maximal subproblem's thoughts.

    A search that halted at the root takes the plain modeling route with no
    reference thoughts.
    """
    thoughts = None
    if trace.maximal is not None:
        thoughts = tree.schema_of(trace.maximal).modeling_thoughts
    return config.backend.generate_code(problem.description, thoughts)


def solve_problem(
    tree: ModelingTree,
    problem: ProblemInstance,
    config: PipelineConfig,
    problem_thoughts: str = "",
) -> SolveOutcome:
    """Search, model, execute, and repair; never raises on per-problem
    response failures - those are recorded in the outcome."""
    clock = config.clock
    t0 = clock()
    error: str | None = None
    trace = SearchTrace()
    try:
        trace = tree_search(tree, problem, config, problem_thoughts)
    except JudgmentFailed as exc:
        error = f"search failed: {exc}"
        if exc.partial_trace is not None:
            trace = exc.partial_trace
    t1 = clock()

    thoughts = None
    if trace.maximal is not None:
        thoughts = tree.schema_of(trace.maximal).modeling_thoughts
    code = ""
    if error is None:
        try:
            code = config.backend.generate_code(
                problem.description, thoughts
            )
        except RECORDABLE_ERRORS as exc:
            error = f"modeling failed: {exc}"
    t2 = clock()

    search_s = t1 - t0
    modeling_s = t2 - t1
    exec_s = 0.0
    repair_rounds = 0
    if error is None:
        t_exec = clock()
        result = config.executor(code, config.exec_timeout)
        exec_s += clock() - t_exec
        while (
            result.status is ExecStatus.RUNTIME_ERROR
            and repair_rounds < config.repair_budget
        ):
            t_repair = clock()
            try:
                code = config.backend.repair_code(code, result.stderr)
            except RECORDABLE_ERRORS as exc:
                error = f"repair failed: {exc}"
                modeling_s += clock() - t_repair
                break
            modeling_s += clock() - t_repair
            repair_rounds += 1
            t_exec = clock()
            result = config.executor(code, config.exec_timeout)
            exec_s += clock() - t_exec
    else:
        result = ExecResult(
            status=ExecStatus.RUNTIME_ERROR,
            objective=None,
            stdout="",
            stderr=error,
            wall_time=0.0,
        )

    matched = None
    if problem.ground_truth is not None:
        matched = answers_match(result, problem.ground_truth, config.match_policy)
    return SolveOutcome(
        problem_id=problem.id,
        trace=trace,
        thoughts_used=thoughts,
        generated_code=code,
        repair_rounds=repair_rounds,
        exec=result,
        matched=matched,
        timings=Timings(
            search_s=search_s, modeling_s=modeling_s, exec_s=exec_s
        ),
        error=error,
    )


@dataclass(frozen=True)
class UpdateOutcome:
    updated: bool
    new_node: str | None
    rounds: int
    unintegrated: bool
    errors: tuple[str, ...] = ()
    final: SolveOutcome | None = None


def _thoughts_prompt_text(schema: NodeSchema) -> str:
    return "\n".join(
        f"- {t.label}: {t.text}" for t in schema.statement_thoughts
    )


def update_tree(
    tree: ModelingTree, problem: ProblemInstance, config: PipelineConfig
) -> UpdateOutcome:
    """Solve; on mismatch distill a schema, expand the tree, re-solve.

    One round is one solve attempt. Distillation or matching errors abort
    the update with the tree unchanged for that round (insertion itself is
    atomic). After the round budget the inserted node remains but the
    problem is reported unintegrated.
    """
    if problem.ground_truth is None:
        raise ValueError("update_tree needs a problem with ground truth")
    outcome = solve_problem(tree, problem, config)
    rounds = 1
    updated = False
    new_node: str | None = None
    errors: list[str] = []
    problem_thoughts = ""

    while outcome.matched is False and rounds < config.update_rounds:
        trace = outcome.trace
        parent_id = trace.maximal or tree.root_id
        try:
            schema = config.backend.distill_schema(
                problem.description,
                trace.halted_at_root,
                tree.schema_of(parent_id),
                outcome.generated_code,
            )
            if tree.find_type(schema.problem_type) is not None:
                errors.append(
                    f"round {rounds}: distilled type "
                    f"{schema.problem_type!r} already in tree"
                )
            else:
                sibling_ids = tree.children_of(parent_id)
                siblings = [tree.schema_of(cid) for cid in sibling_ids]
                names = config.backend.match_subtypes(schema, siblings)
                by_name = {
                    tree.schema_of(cid).problem_type: cid for cid in sibling_ids
                }
                reparent = [by_name[name] for name in names]
                new_node = tree.add_node(parent_id, schema, reparent)
                updated = True
                problem_thoughts = _thoughts_prompt_text(schema)
        except RECORDABLE_ERRORS as exc:
            errors.append(f"round {rounds}: update aborted: {exc}")
            break
        outcome = solve_problem(tree, problem, config, problem_thoughts)
        rounds += 1

    return UpdateOutcome(
        updated=updated,
        new_node=new_node,
        rounds=rounds,
        unintegrated=outcome.matched is False,
        errors=tuple(errors),
        final=outcome,
    )


@dataclass(frozen=True)
class BuildEntry:
    problem_id: str
    updated: bool
    new_node: str | None
    rounds: int
    matched: bool
    unintegrated: bool
    errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class BuildReport:
    entries: tuple[BuildEntry, ...]
    stats: TreeStats
    order_violations: tuple[tuple[str, str], ...] | None
    unintegrated: tuple[str, ...]

    def to_record(self) -> dict:
        return {
            "problems": [
                {
                    "problem_id": e.problem_id,
                    "updated": e.updated,
                    "new_node": e.new_node,
                    "rounds": e.rounds,
                    "matched": e.matched,
                    "unintegrated": e.unintegrated,
                    "errors": list(e.errors),
                }
                for e in self.entries
            ],
            "stats": {
                "node_count": self.stats.node_count,
                "depth": self.stats.depth,
                "avg_degree": self.stats.avg_degree,
            },
            "order_violations": (
                None
                if self.order_violations is None
                else [list(pair) for pair in self.order_violations]
            ),
            "unintegrated": list(self.unintegrated),
        }


def build_tree(
    dataset: Iterable[ProblemInstance],
    config: PipelineConfig,
    on_problem: Callable[[int, ModelingTree, UpdateOutcome], None] | None = None,
) -> tuple[ModelingTree, BuildReport]:
    """Construct a tree from scratch by running the update loop in dataset
    order. Per-problem failures are recorded, never fatal."""
    instances = list(dataset)
    for instance in instances:
        if instance.ground_truth is None:
            raise ValueError(
                f"problem {instance.id!r} lacks ground truth; build needs it"
            )
    tree = ModelingTree()
    entries: list[BuildEntry] = []
    for i, instance in enumerate(instances):
        result = update_tree(tree, instance, config)
        entries.append(
            BuildEntry(
                problem_id=instance.id,
                updated=result.updated,
                new_node=result.new_node,
                rounds=result.rounds,
                matched=bool(result.final and result.final.matched),
                unintegrated=result.unintegrated,
                errors=result.errors,
            )
        )
        if on_problem is not None:
            on_problem(i, tree, result)
    judge = config.backend.order_judge()
    violations = (
        tuple(tree.check_order_preserving(judge)) if judge is not None else None
    )
    report = BuildReport(
        entries=tuple(entries),
        stats=tree.stats(),
        order_violations=violations,
        unintegrated=tuple(e.problem_id for e in entries if e.unintegrated),
    )
    return tree, report
