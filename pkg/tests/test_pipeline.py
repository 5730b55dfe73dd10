import itertools
import json

import pytest

from optitree.backends import (
    SyntheticEngineBackend,
    describe_features,
    feature_answer,
    schema_features,
    schema_for_features,
)
from optitree.execution import ExecStatus, GroundTruth, run_in_process
from optitree.llm import TranscriptBackend, TranscriptEntry
from optitree.pipeline import (
    PipelineConfig,
    ProblemInstance,
    SearchTrace,
    build_tree,
    extract_statement_thoughts,
    solve_outcome_json,
    solve_problem,
    synthesize_and_model,
    tree_search,
    update_tree,
)
from optitree.backends import ChatEngineBackend
from optitree.tree import ModelingTree

from conftest import FIXTURES


def fake_clock():
    counter = itertools.count()
    return lambda: float(next(counter))


def synthetic_config(**overrides) -> PipelineConfig:
    # Digest answers reproduce bit-exactly, so synthetic matching is exact;
    # a relative tolerance would swallow deliberate wrong-answer deltas.
    from optitree.execution import MatchPolicy

    clock = overrides.pop("clock", fake_clock())
    overrides.setdefault("match_policy", MatchPolicy(rel_tol=0.0, abs_tol=0.0))
    return PipelineConfig(
        backend=SyntheticEngineBackend(),
        executor=lambda code, timeout: run_in_process(code, timeout, clock=clock),
        clock=clock,
        **overrides,
    )


def transcript_config(path_or_entries, **overrides) -> PipelineConfig:
    if isinstance(path_or_entries, (str,)):
        client = TranscriptBackend.from_path(FIXTURES / path_or_entries)
    else:
        client = TranscriptBackend(path_or_entries)
    clock = overrides.pop("clock", fake_clock())
    return PipelineConfig(
        backend=ChatEngineBackend(client),
        executor=lambda code, timeout: run_in_process(code, timeout, clock=clock),
        clock=clock,
        **overrides,
    )


def feature_problem(pid: str, features, wrong_answer: bool = False):
    answer = feature_answer(features) + (1.0 if wrong_answer else 0.0)
    return ProblemInstance(
        id=pid,
        description=describe_features(features),
        ground_truth=GroundTruth.numeric(answer),
        dataset="synthetic",
    )


class TestFeatureAnswer:
    def test_frozen_values(self):
        # Pinned digests: any drift in the answer function breaks replayed
        # fixtures and cross-platform determinism, so fail loudly here.
        assert feature_answer({"a"}) == 222752054364699.0
        assert feature_answer({"a", "b"}) == 33774638027395.0

    def test_order_independent(self):
        assert feature_answer(("b", "a")) == feature_answer(("a", "b"))

    def test_distinct_sets_distinct_answers(self):
        import itertools as it

        tokens = [f"f{i}" for i in range(12)]
        seen = {}
        for size in (1, 2):
            for combo in it.combinations(tokens, size):
                value = feature_answer(combo)
                assert value not in seen, (combo, seen[value])
                seen[value] = combo


def abc_tree() -> tuple[ModelingTree, dict[str, str]]:
    """root -> {A{a}, B{b}}, A -> C{a, c}."""
    tree = ModelingTree()
    ids = {}
    ids["A"] = tree.add_node(tree.root_id, schema_for_features({"a"}))
    ids["B"] = tree.add_node(tree.root_id, schema_for_features({"b"}))
    ids["C"] = tree.add_node(ids["A"], schema_for_features({"a", "c"}))
    return tree, ids


class TestTreeSearch:
    def test_root_only_halts(self):
        trace = tree_search(
            ModelingTree(), feature_problem("p", {"a"}), synthetic_config()
        )
        assert trace.halted_at_root
        assert trace.depth == 0
        assert trace.maximal is None

    def test_descends_to_deepest_subset(self):
        tree, ids = abc_tree()
        problem = feature_problem("p", {"a", "c", "d"})
        trace = tree_search(tree, problem, synthetic_config())
        assert [node for node, _ in trace.path] == [ids["A"], ids["C"]]
        assert trace.depth == 2
        assert trace.maximal == ids["C"]

    def test_max_depth_binds(self):
        tree, ids = abc_tree()
        problem = feature_problem("p", {"a", "c", "d"})
        trace = tree_search(tree, problem, synthetic_config(max_depth=1))
        assert [node for node, _ in trace.path] == [ids["A"]]
        assert trace.depth == 1

    def test_tie_breaks_to_lowest_child_index(self):
        tree = ModelingTree()
        first = tree.add_node(tree.root_id, schema_for_features({"a"}))
        tree.add_node(tree.root_id, schema_for_features({"b"}))
        problem = feature_problem("p", {"a", "b"})
        trace = tree_search(tree, problem, synthetic_config())
        assert trace.path[0][0] == first

    def test_depth_never_exceeds_tree_depth(self):
        tree, _ = abc_tree()
        problem = feature_problem("p", {"a", "b", "c"})
        trace = tree_search(tree, problem, synthetic_config())
        assert trace.depth <= tree.stats().depth

    def test_trace_invariants(self):
        with pytest.raises(ValueError):
            SearchTrace(path=(), maximal="n0001", depth=0, halted_at_root=True)
        with pytest.raises(ValueError):
            SearchTrace(path=(), maximal=None, depth=1, halted_at_root=True)


class TestSynthesizeAndModel:
    def test_uses_maximal_thoughts(self):
        tree, ids = abc_tree()
        problem = feature_problem("p", {"a", "c"})
        config = synthetic_config()
        trace = tree_search(tree, problem, config)
        code = synthesize_and_model(tree, problem, trace, config)
        assert code == tree.schema_of(ids["C"]).modeling_thoughts.code_template

    def test_halted_at_root_takes_plain_route(self):
        # Only a model_plain entry exists; using the thought route would
        # exhaust a different stream and fail.
        entries = [TranscriptEntry("model_plain", "```python\nx = 1\n```")]
        config = transcript_config(entries)
        problem = ProblemInstance(id="p", description="anything")
        code = synthesize_and_model(
            ModelingTree(), problem, SearchTrace(), config
        )
        assert code == "x = 1"


class TestSolveCableFixture:
    def test_matched_819(self):
        tree = ModelingTree.from_document(
            (FIXTURES / "product_tree.json").read_text(encoding="utf-8")
        )
        problems = json.loads(
            (FIXTURES / "replay_problems.json").read_text(encoding="utf-8")
        )
        cable = next(p for p in problems if p["id"] == "cable")
        problem = ProblemInstance(
            id=cable["id"],
            description=cable["description"],
            ground_truth=GroundTruth.parse(cable["answer"]),
        )
        config = transcript_config("transcript_cable.jsonl")
        outcome = solve_problem(tree, problem, config)
        assert outcome.exec.status is ExecStatus.OPTIMAL
        assert outcome.exec.objective == 819.0
        assert outcome.matched is True
        assert outcome.trace.depth == 2
        assert outcome.generated_code.startswith("# Create a new model")

    def test_repair_round_recovers(self):
        tree = ModelingTree.from_document(
            (FIXTURES / "product_tree.json").read_text(encoding="utf-8")
        )
        problems = json.loads(
            (FIXTURES / "replay_problems.json").read_text(encoding="utf-8")
        )
        record = next(p for p in problems if p["id"] == "projects")
        problem = ProblemInstance(
            id=record["id"],
            description=record["description"],
            ground_truth=GroundTruth.parse(record["answer"]),
        )
        config = transcript_config("transcript_projects.jsonl", repair_budget=1)
        outcome = solve_problem(tree, problem, config)
        assert outcome.repair_rounds == 1
        assert outcome.exec.status is ExecStatus.OPTIMAL
        assert outcome.matched is True

    def test_infeasible_vs_numeric_truth(self):
        entries = [
            TranscriptEntry(
                "model_plain",
                '```python\nprint("Objective Value: infeasible")\n```',
            )
        ]
        config = transcript_config(entries)
        problem = ProblemInstance(
            id="p", description="d", ground_truth=GroundTruth.numeric(5)
        )
        outcome = solve_problem(ModelingTree(), problem, config)
        assert outcome.exec.status is ExecStatus.INFEASIBLE
        assert outcome.matched is False

    def test_two_code_blocks_recorded_as_error(self):
        entries = [
            TranscriptEntry(
                "model_plain",
                "```python\na = 1\n```\ntext\n```python\nb = 2\n```",
            )
        ]
        config = transcript_config(entries)
        problem = ProblemInstance(id="p", description="d")
        outcome = solve_problem(ModelingTree(), problem, config)
        assert outcome.error is not None
        assert "modeling failed" in outcome.error
        assert outcome.exec.status is ExecStatus.RUNTIME_ERROR

    def test_timings_bounded_by_total(self):
        config = synthetic_config()
        tree, _ = abc_tree()
        problem = feature_problem("p", {"a", "c"})
        start = config.clock()
        outcome = solve_problem(tree, problem, config)
        total = config.clock() - start
        assert outcome.timings.search_s + outcome.timings.modeling_s <= total
        assert outcome.timings.search_s >= 0
        assert outcome.timings.modeling_s >= 0
        assert outcome.timings.exec_s >= 0


class TestDeterministicReplay:
    def test_byte_identical_runs(self):
        problems = json.loads(
            (FIXTURES / "replay_problems.json").read_text(encoding="utf-8")
        )
        for record in problems:
            outputs = []
            for _ in range(2):
                tree = ModelingTree.from_document(
                    (FIXTURES / "product_tree.json").read_text(encoding="utf-8")
                )
                problem = ProblemInstance(
                    id=record["id"],
                    description=record["description"],
                    ground_truth=GroundTruth.parse(record["answer"]),
                )
                config = transcript_config(record["transcript"])
                outcome = solve_problem(tree, problem, config)
                outputs.append(solve_outcome_json(outcome))
            assert outputs[0] == outputs[1]
            assert json.loads(outputs[0])["matched"] is True


class TestSyntheticUpdate:
    def test_match_on_first_solve_leaves_tree_alone(self):
        tree = ModelingTree()
        tree.add_node(tree.root_id, schema_for_features({"a", "x"}))
        before = tree.to_document()
        problem = feature_problem("p", {"a", "x"})
        result = update_tree(tree, problem, synthetic_config())
        assert result.updated is False
        assert result.new_node is None
        assert result.rounds == 1
        assert tree.to_document() == before

    def test_failure_then_success_inserts_one_node(self):
        tree = ModelingTree()
        a = tree.add_node(tree.root_id, schema_for_features({"a"}))
        problem = feature_problem("p", {"a", "x"})
        result = update_tree(tree, problem, synthetic_config())
        assert result.updated is True
        assert result.rounds == 2
        assert result.new_node is not None
        assert tree.parent_of(result.new_node) == a
        assert not result.unintegrated
        judge = SyntheticEngineBackend().order_judge()
        assert tree.check_order_preserving(judge) == []

    def test_insertion_reparents_supersets(self):
        tree = ModelingTree()
        a = tree.add_node(tree.root_id, schema_for_features({"a"}))
        rich = tree.add_node(a, schema_for_features({"a", "x", "y"}))
        problem = feature_problem("p", {"a", "x"})
        result = update_tree(tree, problem, synthetic_config())
        assert result.updated
        # The new {a, x} node subsumes the {a, x, y} child.
        assert tree.parent_of(rich) == result.new_node
        assert tree.parent_of(result.new_node) == a

    def test_budget_exhaustion_flags_unintegrated(self):
        tree = ModelingTree()
        problem = feature_problem("p", {"a", "x"}, wrong_answer=True)
        result = update_tree(tree, problem, synthetic_config(update_rounds=3))
        assert result.rounds == 3
        assert result.unintegrated is True
        # The distilled node itself remains in the tree.
        assert result.updated is True

    def test_requires_ground_truth(self):
        problem = ProblemInstance(id="p", description=describe_features({"a"}))
        with pytest.raises(ValueError):
            update_tree(ModelingTree(), problem, synthetic_config())


UPDATE_PROBLEM = "Batch widgets into production runs to minimize changeovers."

DISTILL_ROOT_RESPONSE = """```json
{
    "industrial_scene_type": "Widget Batching Problem",
    "statement_thoughts_of_type": {
        "statement_thoughts": "Group widget orders into production batches to minimize changeover cost while meeting demand.",
        "constraints": {
            "Batch Size": "each batch stays within the line capacity",
            "Demand": "all widget orders are produced"
        }
    }
}
```"""

DISTILL_MODELING_RESPONSE = """```json
{
    "Problem Type": "Widget Batching Problem",
    "Modeling Thoughts": [
        "[Define Decision Variables] one batch-assignment variable per order",
        "[Define Objective Function] minimize total changeover cost",
        "[Define Constraints] capacity and demand coverage",
        "[Gurobi Code]\\n```python\\nprint(\\"Objective Value: 42.0\\")\\n```",
        "[Common Errors to Avoid]\\n1. forgetting demand coverage"
    ]
}
```"""

ADD_NODES_RESPONSE = """```json
{
    "primary_problem_type": "Widget Batching Problem",
    "matching_subtypes": ["Type A Problem"]
}
```"""


def type_a_schema():
    from optitree.schema import (
        ModelingStep,
        ModelingThoughts,
        NodeSchema,
        StatementThought,
    )

    return NodeSchema(
        problem_type="Type A Problem",
        statement_thoughts=(
            StatementThought("statement", "a fixed-capacity batching variant"),
        ),
        modeling_thoughts=ModelingThoughts(
            steps=(ModelingStep("[Define Decision Variables]", "per batch"),),
            code_template='print("Objective Value: 0.0")',
        ),
    )


def scripted_update_entries(first_code: str) -> list[TranscriptEntry]:
    return [
        # Solve 1: no child qualifies, plain modeling, wrong answer.
        TranscriptEntry(
            "subproblem_identify",
            json.dumps(
                {
                    "matching_subtype": "subtype not find",
                    "reasoning": "nothing fits",
                    "belongs_to_subtypes": False,
                }
            ),
        ),
        TranscriptEntry("model_plain", f"```python\n{first_code}\n```"),
        # Update round: distill, modeling thoughts, sibling matching.
        TranscriptEntry("distill_root", DISTILL_ROOT_RESPONSE),
        TranscriptEntry("distill_modeling_thoughts", DISTILL_MODELING_RESPONSE),
        TranscriptEntry("add_new_nodes", ADD_NODES_RESPONSE),
        # Solve 2: descend into the new node, then its child fails to match.
        TranscriptEntry(
            "subproblem_identify",
            json.dumps(
                {
                    "matching_subtype": "Widget Batching Problem",
                    "reasoning": "exact category",
                    "belongs_to_subtypes": True,
                }
            ),
        ),
        TranscriptEntry(
            "subproblem_identify",
            json.dumps(
                {
                    "matching_subtype": "subtype not find",
                    "reasoning": "no deeper subtype",
                    "belongs_to_subtypes": False,
                }
            ),
        ),
        TranscriptEntry(
            "model_with_thoughts",
            '```python\nprint("Objective Value: 42.0")\n```',
        ),
    ]


class TestScriptedUpdate:
    def test_mismatch_then_match(self):
        tree = ModelingTree()
        type_a = tree.add_node(tree.root_id, type_a_schema())
        entries = scripted_update_entries('print("Objective Value: 7.0")')
        config = transcript_config(entries)
        problem = ProblemInstance(
            id="widgets",
            description=UPDATE_PROBLEM,
            ground_truth=GroundTruth.numeric(42.0),
        )
        result = update_tree(tree, problem, config)
        assert result.updated is True
        assert result.rounds == 2
        assert result.new_node is not None
        assert not result.unintegrated
        # The matched sibling was reparented under the new node.
        assert tree.parent_of(type_a) == result.new_node
        assert tree.parent_of(result.new_node) == tree.root_id
        # Post-state order-preserving under a scripted truth table.
        truth = {("Widget Batching Problem", type_a_schema().problem_type): True}

        def judge(ancestor, descendant):
            return truth.get(
                (ancestor.problem_type, descendant.problem_type), True
            )

        assert tree.check_order_preserving(judge) == []

    def test_match_first_solve_no_update(self):
        tree = ModelingTree()
        tree.add_node(tree.root_id, type_a_schema())
        entries = [
            TranscriptEntry(
                "subproblem_identify",
                json.dumps(
                    {
                        "matching_subtype": type_a_schema().problem_type,
                        "reasoning": "fits",
                        "belongs_to_subtypes": True,
                    }
                ),
            ),
            TranscriptEntry(
                "model_with_thoughts",
                '```python\nprint("Objective Value: 42.0")\n```',
            ),
        ]
        config = transcript_config(entries)
        problem = ProblemInstance(
            id="widgets",
            description=UPDATE_PROBLEM,
            ground_truth=GroundTruth.numeric(42.0),
        )
        result = update_tree(tree, problem, config)
        assert result.updated is False
        assert result.new_node is None
        assert result.rounds == 1


class TestBuildTree:
    def test_empty_dataset(self):
        tree, report = build_tree([], synthetic_config())
        assert len(tree) == 1
        assert report.entries == ()
        assert report.order_violations == ()

    def test_small_synthetic_build(self):
        import random

        from optitree.backends import feature_type_name, parse_feature_text

        rng = random.Random(88)
        tokens = [f"f{i:02d}" for i in range(10)]
        problems = [
            feature_problem(
                f"p{i}", frozenset(rng.sample(tokens, rng.randint(1, 5)))
            )
            for i in range(100)
        ]
        tree, report = build_tree(problems, synthetic_config())
        assert report.order_violations == ()
        assert tree.validate() == []
        matched = [e for e in report.entries if e.matched]
        assert len(matched) == len(problems)
        # Every integrated problem's feature set sits at some tree node.
        by_id = {e.problem_id: e for e in report.entries}
        for problem in problems:
            entry = by_id[problem.id]
            feats = parse_feature_text(problem.description)
            if not entry.unintegrated:
                assert tree.find_type(feature_type_name(feats)) is not None

    def test_build_is_deterministic(self):
        problems = [
            feature_problem("p1", {"a", "b"}),
            feature_problem("p2", {"a"}),
            feature_problem("p3", {"a", "b", "c"}),
        ]
        docs = []
        for _ in range(2):
            tree, _report = build_tree(problems, synthetic_config())
            docs.append(tree.to_document())
        assert docs[0] == docs[1]

    def test_ground_truth_required(self):
        problem = ProblemInstance(id="p", description=describe_features({"a"}))
        with pytest.raises(ValueError):
            build_tree([problem], synthetic_config())

    def test_transcript_build_is_byte_identical(self):
        problem = ProblemInstance(
            id="widgets",
            description=UPDATE_PROBLEM,
            ground_truth=GroundTruth.numeric(42.0),
        )
        docs = []
        for _ in range(2):
            tree = ModelingTree()
            tree.add_node(tree.root_id, type_a_schema())
            entries = scripted_update_entries('print("Objective Value: 7.0")')
            result = update_tree(tree, problem, transcript_config(entries))
            assert result.updated
            docs.append(tree.to_document())
        assert docs[0] == docs[1]


MAX_FLOW_DISTILL = """```json
{
    "industrial_scene_type": "Maximum Flow Problem",
    "statement_thoughts_of_type": {
        "statement_thoughts": "The Maximum Flow Problem involves determining the highest possible flow that can be routed through a directed graph from a source to a sink while adhering to edge capacities.",
        "constraints": {
            "Directed Graph": "Flow can only travel in the direction specified by the edges in the graph.",
            "Capacity Constraints": "The flow on each edge must be non-negative and cannot exceed the edge's maximum capacity.",
            "Flow Conservation": "For every node except the source and sink, the total incoming flow must equal the total outgoing flow."
        }
    }
}
```"""

BROAD_DISTILL = """```json
{
    "industrial_scene_type": "Linear Programming",
    "statement_thoughts_of_type": {
        "statement_thoughts": "A generic linear program.",
        "constraints": {"Linearity": "all relations are linear"}
    }
}
```"""


class TestExtractStatementThoughts:
    def test_max_flow_distillation(self):
        entries = [TranscriptEntry("distill_root", MAX_FLOW_DISTILL)]
        config = transcript_config(entries)
        problem = ProblemInstance(id="p", description="route flow from s to t")
        distilled = extract_statement_thoughts(problem, config)
        assert distilled.problem_type == "Maximum Flow Problem"
        # One summary thought plus three constraint thoughts.
        assert len(distilled.thoughts) == 4
        assert distilled.thoughts[0].label == "statement"
        assert distilled.warnings == ()

    def test_broad_category_warning(self):
        entries = [TranscriptEntry("distill_root", BROAD_DISTILL)]
        config = transcript_config(entries)
        problem = ProblemInstance(id="p", description="minimize cost")
        distilled = extract_statement_thoughts(problem, config)
        assert distilled.problem_type == "Linear Programming"
        assert len(distilled.warnings) == 1

    def test_transcript_replay_exact_fields(self):
        entries = [TranscriptEntry("distill_root", MAX_FLOW_DISTILL)]
        config = transcript_config(entries)
        problem = ProblemInstance(id="p", description="route flow")
        first = extract_statement_thoughts(problem, config)
        config2 = transcript_config(
            [TranscriptEntry("distill_root", MAX_FLOW_DISTILL)]
        )
        second = extract_statement_thoughts(problem, config2)
        assert first == second

    def test_unparseable_distillation_is_reasked(self):
        entries = [
            TranscriptEntry("distill_root", "sorry, I cannot help"),
            TranscriptEntry("distill_root", MAX_FLOW_DISTILL),
        ]
        config = transcript_config(entries)
        problem = ProblemInstance(id="p", description="route flow")
        distilled = extract_statement_thoughts(problem, config)
        assert distilled.problem_type == "Maximum Flow Problem"

    def test_reask_budget_exhaustion_raises(self):
        from optitree.errors import UnparseableResponse

        entries = [TranscriptEntry("distill_root", "still no structure")] * 3
        config = transcript_config(entries)
        problem = ProblemInstance(id="p", description="route flow")
        with pytest.raises(UnparseableResponse):
            extract_statement_thoughts(problem, config)


class TestSearchAgainstExhaustiveOracle:
    def test_small_random_trees(self):
        import random

        rng = random.Random(314)
        tokens = [f"t{i}" for i in range(8)]
        for _ in range(30):
            tree = ModelingTree()
            # Random subset-consistent tree: children extend parent features.
            nodes = [(tree.root_id, frozenset())]
            for _ in range(rng.randint(1, 20)):
                parent_id, parent_feats = rng.choice(nodes)
                extra = frozenset(
                    rng.sample(tokens, rng.randint(1, 3))
                )
                feats = parent_feats | extra
                schema = schema_for_features(feats)
                if tree.find_type(schema.problem_type) is not None:
                    continue
                node_id = tree.add_node(parent_id, schema)
                nodes.append((node_id, feats))
            query = frozenset(rng.sample(tokens, rng.randint(1, 6)))
            problem = feature_problem("q", query)
            trace = tree_search(tree, problem, synthetic_config())
            self._check_against_enumeration(tree, query, trace)

    def _check_against_enumeration(self, tree, query, trace):
        # Exhaustive DFS enumerating every all-qualifying root chain.
        chains = [[]]
        stack = [(tree.root_id, [])]
        while stack:
            node_id, chain = stack.pop()
            for child in tree.children_of(node_id):
                feats = schema_features(tree.schema_of(child))
                if feats <= query:
                    extended = chain + [child]
                    chains.append(extended)
                    stack.append((child, extended))
        path = [node for node, _ in trace.path]
        assert path in chains
        # Non-extendable: the engine's final node has no qualifying child.
        last = path[-1] if path else tree.root_id
        for child in tree.children_of(last):
            assert not (
                schema_features(tree.schema_of(child)) <= query
            )
        # Each step is the argmax-similarity, lowest-index qualifying child.
        current = tree.root_id
        for node in path:
            best = None
            best_sim = -1.0
            for child in tree.children_of(current):
                feats = schema_features(tree.schema_of(child))
                if feats <= query and len(feats) / len(query) > best_sim:
                    best = child
                    best_sim = len(feats) / len(query)
            assert node == best
            current = node
