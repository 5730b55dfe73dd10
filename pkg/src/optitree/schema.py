"""Node schema: problem type, statement thoughts, modeling thoughts.

A schema is the unit of knowledge stored at one tree node. It has three
elements: the problem-type name, a list of statement thoughts (atomic
modeling-relevant features used for subproblem identification), and the
modeling thoughts (ordered step-by-step guidelines plus a solver-code
template and error tips).

Two serialized forms are understood:

* the canonical form - a JSON record with fixed key order, which is what
  ``render_schema`` emits and what persistence embeds;
* a loose prose-like form - section headers ``Problem Type:``,
  ``Statement Thoughts:`` and ``Modeling Thoughts:`` with ``Label: text``
  and ``[Tag] text`` entries, accepted on input only.

Step tags carry their square brackets (e.g. ``[Define Decision Variables]``)
so the canonical document contains the tag literally as written.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import InvariantViolation, MalformedDocument, MissingField

ROOT_TYPE = "AbstractOR"

# Loose-form statement entries whose label is the section header itself are
# the summary paragraph; they are normalized to this label.
SUMMARY_LABEL = "statement"


@dataclass(frozen=True)
class StatementThought:
    """One atomic modeling-relevant feature or requirement."""

    label: str
    text: str


@dataclass(frozen=True)
class ModelingStep:
    """One ordered modeling instruction; ``tag`` includes its brackets."""

    tag: str
    text: str


@dataclass(frozen=True)
class ModelingThoughts:
    """Step-by-step modeling guidelines plus code template and error tips."""

    steps: tuple[ModelingStep, ...] = ()
    code_template: str = ""
    error_tips: tuple[str, ...] = ()


@dataclass(frozen=True, eq=True)
class NodeSchema:
    """One tree node's knowledge.

    ``meta`` preserves unknown fields from parsed documents as opaque data;
    it never participates in validation.
    """

    problem_type: str
    statement_thoughts: tuple[StatementThought, ...] = ()
    modeling_thoughts: ModelingThoughts = field(default_factory=ModelingThoughts)
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def is_root(self) -> bool:
        return self.problem_type == ROOT_TYPE

    def thought_labels(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.statement_thoughts)


def root_schema() -> NodeSchema:
    """The reserved root: abstract problem class with empty thoughts."""
    return NodeSchema(problem_type=ROOT_TYPE)


@dataclass(frozen=True)
class Violation:
    """One invariant violation, naming the field and the broken rule."""

    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


def validate_schema(schema: NodeSchema) -> list[Violation]:
    """Return every invariant violation; empty list means the schema is valid.

    The reserved root name marks the root: the root must carry empty
    thoughts, every other node must carry non-empty modeling steps and a
    non-empty code template.
    """
    violations: list[Violation] = []
    if not schema.problem_type.strip():
        violations.append(Violation("problem_type", "must be non-empty"))
    for i, thought in enumerate(schema.statement_thoughts):
        if not thought.label.strip():
            violations.append(
                Violation(f"statement_thoughts[{i}].label", "must be non-empty")
            )
        if not thought.text.strip():
            violations.append(
                Violation(f"statement_thoughts[{i}].text", "must be non-empty")
            )
    for i, step in enumerate(schema.modeling_thoughts.steps):
        if not step.tag.strip("[] \t"):
            violations.append(
                Violation(f"modeling_thoughts.steps[{i}].tag", "must be non-empty")
            )
    if schema.is_root:
        if schema.statement_thoughts:
            violations.append(
                Violation("statement_thoughts", "root must have empty thoughts")
            )
        if schema.modeling_thoughts.steps:
            violations.append(
                Violation("modeling_thoughts.steps", "root must have empty steps")
            )
    else:
        if not schema.modeling_thoughts.steps:
            violations.append(
                Violation("modeling_thoughts.steps", "must be non-empty for non-root")
            )
        if not schema.modeling_thoughts.code_template.strip():
            violations.append(
                Violation(
                    "modeling_thoughts.code_template",
                    "may be empty only on the root",
                )
            )
    return violations


def schema_to_record(schema: NodeSchema) -> dict[str, Any]:
    """Canonical record form with fixed key order; meta keys sorted."""
    return {
        "problem_type": schema.problem_type,
        "statement_thoughts": [
            {"label": t.label, "text": t.text} for t in schema.statement_thoughts
        ],
        "modeling_thoughts": {
            "steps": [
                {"tag": s.tag, "text": s.text}
                for s in schema.modeling_thoughts.steps
            ],
            "code_template": schema.modeling_thoughts.code_template,
            "error_tips": list(schema.modeling_thoughts.error_tips),
        },
        "meta": {k: schema.meta[k] for k in sorted(schema.meta)},
    }


def render_schema(schema: NodeSchema) -> str:
    """Serialize to the canonical document; byte-identical for equal inputs."""
    violations = validate_schema(schema)
    if violations:
        raise InvariantViolation(
            "schema fails invariants: " + "; ".join(map(str, violations))
        )
    return json.dumps(schema_to_record(schema), ensure_ascii=False, indent=2)


def schema_from_record(record: Mapping[str, Any]) -> NodeSchema:
    """Build a NodeSchema from a parsed record, tolerating key aliases."""
    if not isinstance(record, Mapping):
        raise MalformedDocument("schema record must be a mapping")
    data = {_norm_key(k): v for k, v in record.items()}

    if "problem_type" not in data:
        raise MissingField("problem_type is absent")
    problem_type = str(data.pop("problem_type"))

    if "statement_thoughts" not in data:
        raise MissingField("statement_thoughts is absent")
    thoughts = _parse_statement_thoughts(data.pop("statement_thoughts"))

    if "modeling_thoughts" not in data:
        raise MissingField("modeling_thoughts is absent")
    modeling = modeling_thoughts_from_value(data.pop("modeling_thoughts"))

    meta = data.pop("meta", {})
    if not isinstance(meta, Mapping):
        meta = {"value": meta}
    # Any other unknown keys ride along as opaque metadata.
    extra = {k: v for k, v in data.items()}
    if extra:
        meta = {**meta, **extra}
    return NodeSchema(
        problem_type=problem_type,
        statement_thoughts=thoughts,
        modeling_thoughts=modeling,
        meta=dict(meta),
    )


def parse_schema(document: str) -> NodeSchema:
    """Parse a serialized schema document, canonical or loose.

    Raises MalformedDocument when the text is not parseable at all and
    MissingField when one of the three elements is absent.
    """
    text = document.strip()
    if not text:
        raise MalformedDocument("empty document")
    try:
        record = json.loads(text)
    except ValueError:
        record = None
    if record is not None:
        return schema_from_record(record)
    return schema_from_record(_parse_loose_sections(text))


_SECTION_RE = re.compile(
    r"^\s*(Problem Type|Statement Thoughts|Modeling Thoughts)\s*:",
    re.MULTILINE | re.IGNORECASE,
)
_STEP_TAG_RE = re.compile(r"^\s*[\"']?\[([^\]]+)\]")


def _norm_key(key: Any) -> str:
    return str(key).strip().strip("\"'").lower().replace(" ", "_")


def _parse_loose_sections(text: str) -> dict[str, Any]:
    """Split the loose prose form into a record-shaped dict.

    Only the first occurrence of each section header opens a section; a
    repeated header line (the summary entry reuses the section name) stays
    part of the surrounding section's content.
    """
    matches = []
    seen: set[str] = set()
    for m in _SECTION_RE.finditer(text):
        name = _norm_key(m.group(1))
        if name not in seen:
            seen.add(name)
            matches.append((name, m))
    if not matches:
        raise MalformedDocument("no recognizable schema sections")
    sections: dict[str, str] = {}
    for i, (name, m) in enumerate(matches):
        start = m.end()
        end = matches[i + 1][1].start() if i + 1 < len(matches) else len(text)
        sections[name] = text[start:end].strip()
    record: dict[str, Any] = {}
    if "problem_type" in sections:
        record["problem_type"] = sections["problem_type"].strip().rstrip(",")
    if "statement_thoughts" in sections:
        record["statement_thoughts"] = _split_loose_entries(
            sections["statement_thoughts"]
        )
    if "modeling_thoughts" in sections:
        record["modeling_thoughts"] = _split_loose_entries(
            sections["modeling_thoughts"]
        )
    return record


def _split_loose_entries(block: str) -> list[str]:
    """Split a bracketed loose list into entry strings.

    A block containing ``[Tag]`` step headers splits at those headers, so
    multi-line step bodies (code fences, tip lines) stay with their step.
    A block without headers splits at lines ending with ``,``.
    """
    body = block.strip()
    if body.startswith("["):
        body = body[1:]
    trimmed = body.rstrip().rstrip(",").rstrip()
    if trimmed.endswith("]"):
        body = trimmed[: trimmed.rfind("]")]
    lines = body.splitlines()
    tagged = any(_STEP_TAG_RE.match(ln) for ln in lines)
    entries: list[str] = []
    current: list[str] = []

    def flush() -> None:
        joined = "\n".join(current).strip().rstrip(",").strip()
        if joined:
            entries.append(joined)
        current.clear()

    in_fence = False
    for line in lines:
        if tagged:
            if not in_fence and _STEP_TAG_RE.match(line) and current:
                flush()
            current.append(line)
        else:
            current.append(line)
            if not in_fence and line.rstrip().endswith(","):
                flush()
        if line.count("```") % 2 == 1:
            in_fence = not in_fence
    flush()
    return entries


def _parse_statement_thoughts(value: Any) -> tuple[StatementThought, ...]:
    thoughts: list[StatementThought] = []
    if isinstance(value, Mapping):
        value = [{"label": k, "text": v} for k, v in value.items()]
    if not isinstance(value, list):
        raise MalformedDocument("statement_thoughts must be a list")
    for entry in value:
        if isinstance(entry, Mapping):
            # Canonical records round-trip exactly; no trimming here.
            norm = {_norm_key(k): v for k, v in entry.items()}
            label = str(norm.get("label", ""))
            text = str(norm.get("text", ""))
        else:
            label, text = _split_labelled(str(entry))
            if _norm_key(label) in ("statement_thoughts", "statement_thought"):
                label = SUMMARY_LABEL
        thoughts.append(StatementThought(label=label, text=text))
    return tuple(thoughts)


def _split_labelled(entry: str) -> tuple[str, str]:
    entry = entry.strip().rstrip(",")
    head, sep, tail = entry.partition(":")
    if sep and 0 < len(head.strip()) <= 64 and "\n" not in head:
        return head.strip(), tail.strip()
    return SUMMARY_LABEL, entry


def modeling_thoughts_from_value(value: Any) -> ModelingThoughts:
    """Build ModelingThoughts from a canonical mapping or a loose step list.

    List entries of the form ``[Tag] text`` become steps; a ``[Gurobi Code]``
    entry doubles as the code template and error-tip entries feed
    ``error_tips``.
    """
    if isinstance(value, Mapping):
        norm = {_norm_key(k): v for k, v in value.items()}
        steps_val = norm.get("steps", [])
        steps = tuple(_parse_step(s) for s in steps_val)
        tips = tuple(str(t) for t in norm.get("error_tips", []))
        template = str(norm.get("code_template", ""))
        return ModelingThoughts(steps=steps, code_template=template, error_tips=tips)
    if not isinstance(value, list):
        raise MalformedDocument("modeling_thoughts must be a list or mapping")

    steps: list[ModelingStep] = []
    tips: list[str] = []
    template = ""
    for entry in value:
        step = _parse_step(entry)
        bare = step.tag.strip("[]").strip().lower().rstrip(":")
        if bare in ("error_tips", "common_errors_to_avoid", "common errors to avoid"):
            tips.extend(_split_tips(step.text))
            continue
        steps.append(step)
        if bare == "gurobi code":
            template = step.text
    return ModelingThoughts(
        steps=tuple(steps), code_template=template, error_tips=tuple(tips)
    )


def _parse_step(entry: Any) -> ModelingStep:
    if isinstance(entry, Mapping):
        norm = {_norm_key(k): v for k, v in entry.items()}
        tag = str(norm.get("tag", ""))
        if tag and not tag.lstrip().startswith("["):
            tag = f"[{tag}]"
        return ModelingStep(tag=tag, text=str(norm.get("text", "")))
    text = str(entry).strip()
    m = _STEP_TAG_RE.match(text)
    if m:
        return ModelingStep(tag=f"[{m.group(1)}]", text=text[m.end():].strip())
    return ModelingStep(tag="[Step]", text=text)


def _split_tips(text: str) -> list[str]:
    tips = []
    for line in text.splitlines():
        line = line.strip().rstrip(",").strip()
        if line:
            tips.append(line)
    return tips
