"""Command-line entry point: build, solve, eval, stats, verify."""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path
from typing import Any, Sequence

from .backends import ChatEngineBackend, SyntheticEngineBackend
from .errors import OptiTreeError
from .evaluation import evaluate, load_dataset, render_report
from .execution import GroundTruth, MatchPolicy, run_in_process, run_script
from .llm import LiveBackend, TranscriptBackend
from .pipeline import (
    PipelineConfig,
    ProblemInstance,
    build_tree,
    solve_outcome_json,
    solve_problem,
)
from .tree import ModelingTree

# Flags override config-file values, which override environment defaults.
CONFIG_KEYS = (
    "backend",
    "runner_cmd",
    "jobs",
    "max_depth",
    "repair_budget",
    "update_rounds",
    "rel_tol",
    "abs_tol",
    "integer_round",
    "format",
)


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


def dispatch(argv: Sequence[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    settings = _merge_settings(args)
    try:
        return args.func(args, settings)
    except OptiTreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optitree",
        description="Taxonomy-tree engine for automated optimization modeling.",
    )
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--backend",
            default=None,
            help="live | transcript:<path> | synthetic (default: synthetic)",
        )
        p.add_argument("--runner-cmd", default=None, help="script runner command")
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--max-depth", type=int, default=None)
        p.add_argument("--repair-budget", type=int, default=None)
        p.add_argument("--update-rounds", type=int, default=None)
        p.add_argument("--rel-tol", type=float, default=None)
        p.add_argument("--abs-tol", type=float, default=None)
        p.add_argument(
            "--integer-round", action="store_true", default=None
        )
        p.add_argument("--json", action="store_true", help="emit JSON results")

    p_build = sub.add_parser("build", help="construct a tree from a dataset")
    p_build.add_argument("--dataset", required=True)
    p_build.add_argument("--out", required=True)
    common(p_build)
    p_build.set_defaults(func=_cmd_build)

    p_solve = sub.add_parser("solve", help="solve one problem file")
    p_solve.add_argument("--tree", required=True)
    p_solve.add_argument("--problem", required=True)
    common(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_eval = sub.add_parser("eval", help="evaluate a dataset against a tree")
    p_eval.add_argument("--tree", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--report", default=None, help="write report here")
    p_eval.add_argument(
        "--format", default=None, choices=("table", "json", "csv")
    )
    common(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_stats = sub.add_parser("stats", help="print tree statistics")
    p_stats.add_argument("--tree", required=True)
    p_stats.add_argument("--json", action="store_true")
    p_stats.set_defaults(func=_cmd_stats)

    p_verify = sub.add_parser(
        "verify", help="check structure and subproblem order"
    )
    p_verify.add_argument("--tree", required=True)
    p_verify.add_argument(
        "--oracle", default="synthetic", choices=("synthetic", "live")
    )
    p_verify.add_argument(
        "--yes-really",
        action="store_true",
        help="required for --oracle live (O(n^2) paid model calls)",
    )
    p_verify.add_argument("--json", action="store_true")
    p_verify.set_defaults(func=_cmd_verify)

    return parser


def _merge_settings(args: argparse.Namespace) -> dict[str, Any]:
    settings: dict[str, Any] = {
        "backend": "synthetic",
        "runner_cmd": None,
        "jobs": 1,
        "max_depth": None,
        "repair_budget": 2,
        "update_rounds": 3,
        "rel_tol": 1e-4,
        "abs_tol": 1e-6,
        "integer_round": False,
        "format": "table",
    }
    explicit: set[str] = set()
    config_path = getattr(args, "config", None)
    if config_path:
        loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        for key in CONFIG_KEYS:
            if key in loaded:
                settings[key] = loaded[key]
                explicit.add(key)
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
            explicit.add(key)
    settings["_explicit"] = explicit
    return settings


def _make_config(settings: dict[str, Any]) -> PipelineConfig:
    spec = settings["backend"]
    explicit = settings.get("_explicit", set())
    rel_tol, abs_tol = settings["rel_tol"], settings["abs_tol"]
    if spec == "synthetic":
        backend: Any = SyntheticEngineBackend()
        executor = run_in_process
        # Synthetic digest answers reproduce exactly; unless tolerances were
        # requested, match them exactly so wrong answers stay wrong.
        if "rel_tol" not in explicit and "abs_tol" not in explicit:
            rel_tol, abs_tol = 0.0, 0.0
    elif spec == "live":
        backend = ChatEngineBackend(LiveBackend())
        executor = _subprocess_executor(settings)
    elif isinstance(spec, str) and spec.startswith("transcript:"):
        path = spec.split(":", 1)[1]
        backend = ChatEngineBackend(TranscriptBackend.from_path(path))
        executor = _subprocess_executor(settings)
    else:
        raise OptiTreeError(f"unknown backend {spec!r}")
    return PipelineConfig(
        backend=backend,
        executor=executor,
        match_policy=MatchPolicy(
            rel_tol=rel_tol,
            abs_tol=abs_tol,
            integer_round=settings["integer_round"],
        ),
        max_depth=settings["max_depth"],
        repair_budget=settings["repair_budget"],
        update_rounds=settings["update_rounds"],
    )


def _subprocess_executor(settings: dict[str, Any]):
    runner = settings.get("runner_cmd")
    runner_cmd = shlex.split(runner) if runner else None
    return lambda code, timeout: run_script(code, timeout, runner_cmd=runner_cmd)


def _load_tree(path: str) -> ModelingTree:
    return ModelingTree.from_document(Path(path).read_text(encoding="utf-8"))


def _cmd_build(args: argparse.Namespace, settings: dict[str, Any]) -> int:
    config = _make_config(settings)
    data = load_dataset(Path(args.dataset).read_text(encoding="utf-8"))
    tree, report = build_tree(data.instances, config)
    Path(args.out).write_text(tree.to_document(), encoding="utf-8")
    if args.json:
        payload = report.to_record()
        payload["malformed_lines"] = [
            {"line": m.line_no, "reason": m.reason} for m in data.malformed
        ]
        print(json.dumps(payload, ensure_ascii=False, indent=2))
    else:
        stats = report.stats
        matched = sum(1 for e in report.entries if e.matched)
        print(
            f"built tree: {stats.node_count} nodes, depth {stats.depth}, "
            f"avg degree {stats.avg_degree:.2f}"
        )
        print(
            f"problems: {len(report.entries)} total, {matched} matched, "
            f"{len(report.unintegrated)} unintegrated, "
            f"{len(data.malformed)} malformed lines"
        )
        if report.order_violations is not None:
            ok = "OK" if not report.order_violations else "VIOLATED"
            print(f"order-preserving: {ok}")
    return 0


def _cmd_solve(args: argparse.Namespace, settings: dict[str, Any]) -> int:
    config = _make_config(settings)
    tree = _load_tree(args.tree)
    record = json.loads(Path(args.problem).read_text(encoding="utf-8"))
    description = record.get("description", record.get("question", ""))
    if not str(description).strip():
        raise OptiTreeError("problem file lacks a description")
    truth = None
    if record.get("answer") is not None:
        truth = GroundTruth.parse(record["answer"])
    problem = ProblemInstance(
        id=str(record.get("id", "problem")),
        description=str(description),
        ground_truth=truth,
        dataset=str(record.get("dataset", "")),
    )
    outcome = solve_problem(tree, problem, config)
    if args.json:
        print(solve_outcome_json(outcome))
    else:
        print(f"status: {outcome.exec.status.value}")
        if outcome.exec.objective is not None:
            print(f"objective: {outcome.exec.objective}")
        if outcome.matched is not None:
            print(f"matched: {outcome.matched}")
        print(f"search depth: {outcome.trace.depth}")
    return 0


def _cmd_eval(args: argparse.Namespace, settings: dict[str, Any]) -> int:
    config = _make_config(settings)
    tree = _load_tree(args.tree)
    data = load_dataset(Path(args.dataset).read_text(encoding="utf-8"))
    report = evaluate(tree, data.instances, config, jobs=settings["jobs"])
    fmt = "json" if args.json else settings["format"]
    rendered = render_report(report, fmt)
    print(rendered)
    if args.report:
        Path(args.report).write_text(
            render_report(report, "json"), encoding="utf-8"
        )
    return 0


def _cmd_stats(args: argparse.Namespace, settings: dict[str, Any]) -> int:
    del settings
    stats = _load_tree(args.tree).stats()
    if args.json:
        print(
            json.dumps(
                {
                    "node_count": stats.node_count,
                    "depth": stats.depth,
                    "avg_degree": stats.avg_degree,
                },
                indent=2,
            )
        )
    else:
        print(
            f"nodes: {stats.node_count}\ndepth: {stats.depth}\n"
            f"avg_degree: {stats.avg_degree:.2f}"
        )
    return 0


def _cmd_verify(args: argparse.Namespace, settings: dict[str, Any]) -> int:
    tree = _load_tree(args.tree)
    problems = tree.validate()
    if args.oracle == "live" and not args.yes_really:
        print(
            "error: --oracle live re-judges every ancestor pair with paid "
            "model calls; pass --yes-really to confirm",
            file=sys.stderr,
        )
        return 2
    if args.oracle == "live":
        from .oracle import llm_judge_batch

        client = LiveBackend()

        def judge(ancestor, descendant):
            verdicts = llm_judge_batch(
                client,
                [ancestor],
                descendant.problem_type
                + "\n"
                + "\n".join(t.text for t in descendant.statement_thoughts),
                parent_type=ancestor.problem_type,
            )
            return verdicts[0].is_subproblem
    else:
        judge = SyntheticEngineBackend().order_judge()
    violations = tree.check_order_preserving(judge)
    ok = not problems and not violations
    if args.json:
        print(
            json.dumps(
                {
                    "structure_ok": not problems,
                    "structure_problems": problems,
                    "order_preserving": not violations,
                    "violations": [list(v) for v in violations],
                },
                indent=2,
            )
        )
    else:
        print(f"structure: {'OK' if not problems else 'BROKEN'}")
        for problem in problems:
            print(f"  - {problem}")
        print(f"order-preserving: {'OK' if not violations else 'VIOLATED'}")
        for ancestor, descendant in violations:
            print(f"  - ({ancestor}, {descendant})")
    return 0 if ok else 1


if __name__ == "__main__":
    main()
