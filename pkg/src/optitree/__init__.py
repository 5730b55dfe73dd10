"""Taxonomy-tree engine for automated optimization modeling.

Maintains a subproblem-order-preserving tree of problem schemas, searches
it to decompose new problems, drives solver-code generation from the
retrieved modeling thoughts, executes that code, and grows the tree from
failures. A deterministic synthetic backend makes every algorithm testable
without a live model.
"""

from .backends import (
    ChatEngineBackend,
    DistilledStatement,
    EngineBackend,
    SyntheticEngineBackend,
)
from .errors import OptiTreeError
from .evaluation import (
    EvalReport,
    evaluate,
    load_dataset,
    render_report,
)
from .execution import (
    ExecResult,
    ExecStatus,
    GroundTruth,
    MatchPolicy,
    answers_match,
    parse_objective,
    run_in_process,
    run_script,
)
from .llm import (
    ChatRequest,
    ChatResponse,
    LiveBackend,
    TranscriptBackend,
    extract_code_block,
    extract_json_block,
    parse_subtype_response,
    render_prompt,
)
from .oracle import (
    FeatureProblem,
    StructuralModel,
    SubproblemJudgment,
    is_structural_submodel,
    llm_judge_batch,
    synthetic_judge,
)
from .pipeline import (
    PipelineConfig,
    ProblemInstance,
    SearchTrace,
    SolveOutcome,
    UpdateOutcome,
    build_tree,
    extract_statement_thoughts,
    solve_outcome_json,
    solve_problem,
    synthesize_and_model,
    tree_search,
    update_tree,
)
from .schema import (
    ModelingStep,
    ModelingThoughts,
    NodeSchema,
    StatementThought,
    parse_schema,
    render_schema,
    validate_schema,
)
from .tree import ModelingTree, TreeStats, load_tree, new_tree, save_tree

__version__ = "0.1.0"

__all__ = [
    "ChatEngineBackend",
    "ChatRequest",
    "ChatResponse",
    "DistilledStatement",
    "EngineBackend",
    "EvalReport",
    "ExecResult",
    "ExecStatus",
    "FeatureProblem",
    "GroundTruth",
    "LiveBackend",
    "MatchPolicy",
    "ModelingStep",
    "ModelingThoughts",
    "ModelingTree",
    "NodeSchema",
    "OptiTreeError",
    "PipelineConfig",
    "ProblemInstance",
    "SearchTrace",
    "SolveOutcome",
    "StatementThought",
    "StructuralModel",
    "SubproblemJudgment",
    "SyntheticEngineBackend",
    "TranscriptBackend",
    "TreeStats",
    "UpdateOutcome",
    "answers_match",
    "build_tree",
    "evaluate",
    "extract_code_block",
    "extract_json_block",
    "extract_statement_thoughts",
    "is_structural_submodel",
    "llm_judge_batch",
    "load_dataset",
    "load_tree",
    "new_tree",
    "save_tree",
    "parse_objective",
    "parse_schema",
    "parse_subtype_response",
    "render_prompt",
    "render_report",
    "render_schema",
    "run_in_process",
    "run_script",
    "solve_outcome_json",
    "solve_problem",
    "synthesize_and_model",
    "synthetic_judge",
    "tree_search",
    "update_tree",
    "validate_schema",
]
