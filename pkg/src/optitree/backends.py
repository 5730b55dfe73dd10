"""Engine backends: everything the pipeline asks a judgment/thought source.

``ChatEngineBackend`` speaks prompts through any chat client (live endpoint
or recorded transcript). ``SyntheticEngineBackend`` is a deterministic
stand-in that understands feature-token problems, so every pipeline
algorithm is testable without a model in the loop.

The synthetic problem language: a description contains
``features: tok1, tok2, ...`` and its ground-truth answer is a stable
48-bit digest of the feature set. The synthetic modeler emits a script
printing the answer for the schema it was handed, so a solve succeeds
exactly when the search found a node carrying the problem's full feature
set.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

from .errors import (
    MalformedStructure,
    NoStructuredBlock,
    UnknownSubtypeName,
    UnparseableResponse,
)
from .llm import (
    ChatClient,
    ChatRequest,
    extract_code_block,
    extract_json_block,
)
from .oracle import FeatureProblem, SubproblemJudgment, llm_judge_batch, synthetic_judge
from .prompts import BROAD_CATEGORY_NAMES, DEFAULT_CODE_TEMPLATE
from .schema import (
    SUMMARY_LABEL,
    ModelingStep,
    ModelingThoughts,
    NodeSchema,
    StatementThought,
    modeling_thoughts_from_value,
)


@dataclass(frozen=True)
class DistilledStatement:
    """Result of statement-thought extraction for one problem."""

    problem_type: str
    thoughts: tuple[StatementThought, ...]
    warnings: tuple[str, ...] = ()


class EngineBackend(Protocol):
    """What the pipeline needs from a judgment and thought source."""

    name: str

    def judge_children(
        self,
        children: Sequence[NodeSchema],
        problem_text: str,
        problem_thoughts: str,
        parent_type: str,
    ) -> list[SubproblemJudgment]: ...

    def distill_statement_thoughts(self, problem_text: str) -> DistilledStatement: ...

    def distill_schema(
        self,
        problem_text: str,
        at_root: bool,
        parent: NodeSchema | None,
        solution_text: str,
    ) -> NodeSchema: ...

    def match_subtypes(
        self, schema: NodeSchema, siblings: Sequence[NodeSchema]
    ) -> list[str]: ...

    def generate_code(
        self, problem_text: str, thoughts: ModelingThoughts | None
    ) -> str: ...

    def repair_code(self, code: str, error_text: str) -> str: ...

    def order_judge(self):
        """Cheap (ancestor, descendant) -> bool judge, or None if each
        judgment would cost a model call."""
        ...


def render_thoughts_text(thoughts: ModelingThoughts) -> str:
    """Flatten modeling thoughts into the prompt-facing text block."""
    lines = [f"{step.tag} {step.text}".strip() for step in thoughts.steps]
    if thoughts.code_template:
        lines.append("[Code Template]")
        lines.append(thoughts.code_template)
    if thoughts.error_tips:
        lines.append("[Error Tips]")
        lines.extend(f"- {tip}" for tip in thoughts.error_tips)
    return "\n".join(lines)


def render_statement_thoughts(thoughts: Iterable[StatementThought]) -> str:
    return json.dumps(
        [{"label": t.label, "text": t.text} for t in thoughts],
        ensure_ascii=False,
    )


def _norm_keys(record: Mapping) -> dict:
    return {
        str(k).strip().lower().replace(" ", "_"): v for k, v in record.items()
    }


def _thoughts_from_block(block) -> tuple[StatementThought, ...]:
    """Flatten a distilled statement-thoughts block into thought tuples."""
    if isinstance(block, str):
        return (StatementThought(SUMMARY_LABEL, block),)
    if not isinstance(block, Mapping):
        raise MalformedStructure("statement-thoughts block is not a record")
    data = _norm_keys(block)
    thoughts: list[StatementThought] = []
    summary = data.get("statement_thoughts", data.get("statement_thought"))
    if isinstance(summary, str) and summary.strip():
        thoughts.append(StatementThought(SUMMARY_LABEL, summary.strip()))
    constraints = data.get("constraints", {})
    if isinstance(constraints, Mapping):
        for label, text in constraints.items():
            thoughts.append(StatementThought(str(label), str(text)))
    if not thoughts:
        raise MalformedStructure("distilled block carries no thoughts")
    return tuple(thoughts)


RESPONSE_REASKS = 2


class ChatEngineBackend:
    """Prompt-driven backend over any chat client.

    Unparseable structured output is re-asked up to the re-ask budget
    before surfacing as an error; transport retries live in the client.
    """

    name = "chat"

    def __init__(self, client: ChatClient) -> None:
        self.client = client

    def judge_children(
        self,
        children: Sequence[NodeSchema],
        problem_text: str,
        problem_thoughts: str,
        parent_type: str,
    ) -> list[SubproblemJudgment]:
        return llm_judge_batch(
            self.client,
            children,
            problem_text,
            target_thoughts=problem_thoughts,
            parent_type=parent_type,
        )

    def distill_statement_thoughts(self, problem_text: str) -> DistilledStatement:
        request = ChatRequest(
            template_name="distill_root",
            variables={"specific_problem": problem_text},
        )
        record = self._complete_structured(request)
        data = _norm_keys(record)
        problem_type = str(
            data.get("industrial_scene_type", data.get("problem_type", ""))
        ).strip()
        if not problem_type:
            raise MalformedStructure("distillation names no problem type")
        thoughts = _thoughts_from_block(
            data.get("statement_thoughts_of_type", data.get("statement_thoughts"))
        )
        warnings = []
        if problem_type.lower() in BROAD_CATEGORY_NAMES:
            warnings.append(f"broad category name: {problem_type!r}")
        return DistilledStatement(problem_type, thoughts, tuple(warnings))

    def _distill_subtype(
        self, problem_text: str, parent: NodeSchema
    ) -> tuple[str, tuple[StatementThought, ...]]:
        request = ChatRequest(
            template_name="distill_subtype",
            variables={
                "specific_problem": problem_text,
                "current_basic_problem_type": parent.problem_type,
                "statement_thoughts_of_basic_problem_type": render_statement_thoughts(
                    parent.statement_thoughts
                ),
            },
        )
        record = self._complete_structured(request)
        data = _norm_keys(record)
        subtype = str(
            data.get("formulated_subtype", data.get("matching_subtype", ""))
        ).strip()
        if not subtype:
            raise MalformedStructure("subtype distillation names no subtype")
        thoughts = _thoughts_from_block(
            data.get(
                "statement_thoughts_of_subtype", data.get("statement_thoughts")
            )
        )
        return subtype, thoughts

    def distill_schema(
        self,
        problem_text: str,
        at_root: bool,
        parent: NodeSchema | None,
        solution_text: str,
    ) -> NodeSchema:
        if at_root or parent is None or parent.is_root:
            distilled = self.distill_statement_thoughts(problem_text)
            problem_type, thoughts = distilled.problem_type, distilled.thoughts
        else:
            problem_type, thoughts = self._distill_subtype(problem_text, parent)
        request = ChatRequest(
            template_name="distill_modeling_thoughts",
            variables={
                "problem_type": problem_type,
                "statement_thoughts": render_statement_thoughts(thoughts),
                "specific_problem": problem_text,
                "solution_step": solution_text,
            },
        )
        record = self._complete_structured(request)
        data = _norm_keys(record)
        steps_value = data.get(
            "modeling_thoughts", data.get("reason_flow", [])
        )
        modeling = modeling_thoughts_from_value(steps_value)
        if not modeling.steps:
            raise MalformedStructure("distilled modeling thoughts carry no steps")
        if not modeling.code_template.strip():
            modeling = ModelingThoughts(
                steps=modeling.steps,
                code_template=DEFAULT_CODE_TEMPLATE,
                error_tips=modeling.error_tips,
            )
        return NodeSchema(
            problem_type=problem_type,
            statement_thoughts=thoughts,
            modeling_thoughts=modeling,
        )

    def match_subtypes(
        self, schema: NodeSchema, siblings: Sequence[NodeSchema]
    ) -> list[str]:
        if not siblings:
            return []
        listing = json.dumps(
            [
                {
                    "problem_type": s.problem_type,
                    "statement_thoughts": [
                        {"label": t.label, "text": t.text}
                        for t in s.statement_thoughts
                    ],
                }
                for s in siblings
            ],
            ensure_ascii=False,
        )
        request = ChatRequest(
            template_name="add_new_nodes",
            variables={
                "primary_problem_type": schema.problem_type,
                "statement_thoughts_type": render_statement_thoughts(
                    schema.statement_thoughts
                ),
                "list_of_problem_types": listing,
            },
        )
        record = self._complete_structured(request)
        data = _norm_keys(record)
        names = data.get("matching_subtypes", [])
        if not isinstance(names, list):
            raise MalformedStructure("matching_subtypes is not a list")
        known = {s.problem_type for s in siblings}
        matched = [str(n) for n in names]
        unknown = [n for n in matched if n not in known]
        if unknown:
            raise UnknownSubtypeName(
                f"response names {unknown!r}, not among {sorted(known)!r}"
            )
        return matched

    def generate_code(
        self, problem_text: str, thoughts: ModelingThoughts | None
    ) -> str:
        if thoughts is None:
            request = ChatRequest(
                template_name="model_plain",
                variables={"user_input": problem_text},
            )
        else:
            request = ChatRequest(
                template_name="model_with_thoughts",
                variables={
                    "user_input": problem_text,
                    "modeling_thought": render_thoughts_text(thoughts),
                },
            )
        return extract_code_block(self.client.complete(request).text)

    def repair_code(self, code: str, error_text: str) -> str:
        request = ChatRequest(
            template_name="code_correction",
            variables={"code": code, "error": error_text},
        )
        return extract_code_block(self.client.complete(request).text)

    def order_judge(self):
        # Verifying the subproblem order live costs O(n^2) model calls; the
        # CLI gates that behind an explicit flag instead.
        return None

    def _complete_structured(self, request: ChatRequest):
        last: Exception | None = None
        for _attempt in range(1 + RESPONSE_REASKS):
            text = self.client.complete(request).text
            try:
                return extract_json_block(text)
            except (NoStructuredBlock, MalformedStructure) as exc:
                last = exc
        raise UnparseableResponse(
            f"structured output stayed unparseable after "
            f"{1 + RESPONSE_REASKS} attempts: {last}"
        )


# -- synthetic feature-problem backend ---------------------------------------

_FEATURE_RE = re.compile(r"features:\s*([^\n.]*)", re.IGNORECASE)


def describe_features(features: Iterable[str]) -> str:
    """Render the canonical synthetic problem description."""
    toks = ", ".join(sorted(features))
    return f"Plan an operation that requires features: {toks}."


def parse_feature_text(text: str) -> frozenset[str]:
    m = _FEATURE_RE.search(text)
    if not m:
        return frozenset()
    return frozenset(
        tok.strip() for tok in m.group(1).split(",") if tok.strip()
    )


def feature_answer(features: Iterable[str]) -> float:
    """Stable 48-bit digest of a feature set, used as its ground truth."""
    key = ",".join(sorted(features)).encode("utf-8")
    return float(int.from_bytes(hashlib.sha256(key).digest()[:6], "big"))


def feature_type_name(features: Iterable[str]) -> str:
    return "Feature Problem " + " ".join(sorted(features))


def schema_for_features(features: Iterable[str]) -> NodeSchema:
    feats = sorted(features)
    steps = tuple(
        ModelingStep(tag=f"[Cover {tok}]", text=f"account for feature {tok}")
        for tok in feats
    )
    template = f'print("Objective Value: {feature_answer(feats)}")'
    return NodeSchema(
        problem_type=feature_type_name(feats),
        statement_thoughts=tuple(
            StatementThought(label=tok, text=f"requires feature {tok}")
            for tok in feats
        ),
        modeling_thoughts=ModelingThoughts(
            steps=steps, code_template=template, error_tips=()
        ),
    )


def schema_features(schema: NodeSchema) -> frozenset[str]:
    """Feature tokens of a schema: its thought labels minus the summary."""
    return frozenset(
        t.label for t in schema.statement_thoughts if t.label != SUMMARY_LABEL
    )


def synthetic_dataset_records(
    feature_sets: Iterable[Iterable[str]],
) -> list[dict]:
    """Line-delimited dataset records for the synthetic problem language."""
    records = []
    for i, feats in enumerate(feature_sets):
        records.append(
            {
                "id": f"syn{i:04d}",
                "description": describe_features(feats),
                "answer": feature_answer(feats),
                "dataset": "synthetic",
            }
        )
    return records


class SyntheticEngineBackend:
    """Deterministic backend over the feature-token problem language."""

    name = "synthetic"

    def judge_children(
        self,
        children: Sequence[NodeSchema],
        problem_text: str,
        problem_thoughts: str,
        parent_type: str,
    ) -> list[SubproblemJudgment]:
        del problem_thoughts, parent_type
        target = parse_feature_text(problem_text)
        judgments = []
        for child in children:
            feats = schema_features(child)
            if not target or not feats:
                judgments.append(SubproblemJudgment(False, 0.0, "no features"))
                continue
            judgments.append(
                synthetic_judge(
                    FeatureProblem("candidate", feats),
                    FeatureProblem("target", target),
                )
            )
        return judgments

    def distill_statement_thoughts(self, problem_text: str) -> DistilledStatement:
        feats = parse_feature_text(problem_text)
        if not feats:
            raise MalformedStructure(
                "synthetic description carries no feature tokens"
            )
        schema = schema_for_features(feats)
        return DistilledStatement(
            schema.problem_type, schema.statement_thoughts, ()
        )

    def distill_schema(
        self,
        problem_text: str,
        at_root: bool,
        parent: NodeSchema | None,
        solution_text: str,
    ) -> NodeSchema:
        del at_root, parent, solution_text
        feats = parse_feature_text(problem_text)
        if not feats:
            raise MalformedStructure(
                "synthetic description carries no feature tokens"
            )
        return schema_for_features(feats)

    def match_subtypes(
        self, schema: NodeSchema, siblings: Sequence[NodeSchema]
    ) -> list[str]:
        mine = schema_features(schema)
        return [
            s.problem_type
            for s in siblings
            if mine and mine <= schema_features(s)
        ]

    def generate_code(
        self, problem_text: str, thoughts: ModelingThoughts | None
    ) -> str:
        del problem_text
        if thoughts is None:
            return f'print("Objective Value: {feature_answer(())}")'
        return thoughts.code_template

    def repair_code(self, code: str, error_text: str) -> str:
        del error_text
        return code

    def order_judge(self):
        def judge(ancestor: NodeSchema, descendant: NodeSchema) -> bool:
            return schema_features(ancestor) <= schema_features(descendant)

        return judge
