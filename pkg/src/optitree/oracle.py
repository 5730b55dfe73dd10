"""Subproblem judgment: the qualifying indicator plus similarity score.

Three routes exist for deciding whether one problem is a subproblem of
another:

* ``synthetic_judge`` - a deterministic feature-subset model used by the
  test oracle and the synthetic backend;
* ``is_structural_submodel`` - a desk-scale checker over structural model
  signatures (variables, objective terms, constraints);
* ``llm_judge_batch`` - the live route that renders the subproblem
  identification prompt and parses the picked subtype.

Disqualified candidates always carry similarity 0; the judgment type
enforces that on construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .errors import UnknownSubtypeName, UnparseableResponse
from .llm import ChatClient, ChatRequest, parse_subtype_response
from .schema import NodeSchema

RESPONSE_REASKS = 2

SENSES = ("<=", "=", ">=")


@dataclass(frozen=True)
class SubproblemJudgment:
    """Verdict for one candidate: qualifies or not, plus similarity."""

    is_subproblem: bool
    similarity: float
    rationale: str = ""

    def __post_init__(self) -> None:
        if not self.is_subproblem and self.similarity != 0:
            raise ValueError("disqualified candidates must carry similarity 0")
        if not 0.0 <= self.similarity <= 1.0:
            raise ValueError(f"similarity {self.similarity} outside [0, 1]")


@dataclass(frozen=True)
class FeatureProblem:
    """Synthetic stand-in for a problem: a name and a set of feature tokens."""

    name: str
    features: frozenset[str]

    def __post_init__(self) -> None:
        if not self.features:
            raise ValueError("feature problems must have at least one feature")


def synthetic_judge(
    candidate: FeatureProblem, target: FeatureProblem
) -> SubproblemJudgment:
    """Deterministic subset model: candidate qualifies iff its features are
    contained in the target's; similarity is the coverage ratio."""
    if candidate.features <= target.features:
        ratio = len(candidate.features) / len(target.features)
        witness = ", ".join(sorted(candidate.features))
        return SubproblemJudgment(
            is_subproblem=True,
            similarity=ratio,
            rationale=f"target covers: {witness}",
        )
    missing = ", ".join(sorted(candidate.features - target.features))
    return SubproblemJudgment(
        is_subproblem=False, similarity=0.0, rationale=f"target lacks: {missing}"
    )


@dataclass(frozen=True)
class StructuralModel:
    """Signature of an optimization model for submodel checks.

    Only structure is kept: variable names, objective-term supports with a
    coefficient signature (sign-plus-arity summary, not exact values, since
    subproblems may differ in parameters), and constraint supports with
    their sense and a human-readable tag.
    """

    variables: frozenset[str]
    objective_terms: frozenset[tuple[frozenset[str], str]]
    constraints: tuple[tuple[frozenset[str], str, str], ...]

    def __post_init__(self) -> None:
        for support, _sig in self.objective_terms:
            if not support <= self.variables:
                raise ValueError("objective support outside variable set")
        for support, sense, tag in self.constraints:
            if not support <= self.variables:
                raise ValueError(f"constraint {tag!r} support outside variables")
            if sense not in SENSES:
                raise ValueError(f"constraint {tag!r} has unknown sense {sense!r}")


def is_structural_submodel(sub: StructuralModel, full: StructuralModel) -> bool:
    """True iff ``sub`` is a structural part of ``full``.

    Every sub variable must exist in full; every sub constraint and
    objective term must appear in full once full is restricted to the sub's
    variables (the full model may add coupling terms over its extra
    variables without breaking the relation).
    """
    if not sub.variables <= full.variables:
        return False
    full_constraints = {
        (support & sub.variables, sense)
        for support, sense, _tag in full.constraints
    }
    for support, sense, _tag in sub.constraints:
        if (support, sense) not in full_constraints:
            return False
    full_terms = {
        (support & sub.variables, sig) for support, sig in full.objective_terms
    }
    for support, sig in sub.objective_terms:
        if (support, sig) not in full_terms:
            return False
    return True


def llm_judge_batch(
    client: ChatClient,
    candidates: Sequence[NodeSchema],
    target_text: str,
    target_thoughts: str = "",
    parent_type: str = "",
) -> list[SubproblemJudgment]:
    """Judge all candidates in one prompt round-trip.

    The prompt asks the model to pick a single subtype; the winner gets a
    qualifying judgment with similarity 1 and everyone else is disqualified.
    The no-match sentinel disqualifies all candidates. A response naming a
    type outside the candidate list raises UnknownSubtypeName.
    """
    info = [
        {
            "problem_type": c.problem_type,
            "statement_thoughts": [
                {"label": t.label, "text": t.text} for t in c.statement_thoughts
            ],
        }
        for c in candidates
    ]
    problem = target_text
    if target_thoughts:
        problem = f"{target_text}\n\nStatement thoughts:\n{target_thoughts}"
    request = ChatRequest(
        template_name="subproblem_identify",
        variables={
            "input_problem": problem,
            "basic_type": parent_type,
            "statement_thought_info": json.dumps(info, ensure_ascii=False),
        },
    )
    pick = None
    last_error: Exception | None = None
    for _attempt in range(1 + RESPONSE_REASKS):
        response = client.complete(request)
        try:
            pick = parse_subtype_response(response.text)
            break
        except UnparseableResponse:
            raise
        except Exception as exc:  # noqa: BLE001 - re-ask on any parse failure
            last_error = exc
    if pick is None:
        raise UnparseableResponse(
            f"subtype response stayed unparseable after "
            f"{1 + RESPONSE_REASKS} attempts: {last_error}"
        )

    if not pick.belongs or pick.matching is None:
        return [
            SubproblemJudgment(False, 0.0, pick.rationale) for _ in candidates
        ]
    names = [c.problem_type for c in candidates]
    if pick.matching not in names:
        raise UnknownSubtypeName(
            f"response names {pick.matching!r}, not among {names!r}"
        )
    return [
        SubproblemJudgment(True, 1.0, pick.rationale)
        if name == pick.matching
        else SubproblemJudgment(False, 0.0, "")
        for name in names
    ]
