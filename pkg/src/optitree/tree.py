"""The modeling tree: a rooted taxonomy of node schemas.

Every ancestor in the tree is meant to be a subproblem of its descendants;
``add_node`` implements the two insertion cases that keep that order intact
(reparenting children the new node subsumes, leaving the rest as siblings),
and ``check_order_preserving`` verifies the property against any judge.

Mutation requires exclusive access (single writer). Readers should work on
``snapshot()`` copies; all read operations are side-effect free.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import (
    DuplicateType,
    InvariantViolation,
    MalformedDocument,
    NotAChild,
    UnknownParent,
)
from .schema import (
    NodeSchema,
    root_schema,
    schema_from_record,
    schema_to_record,
    validate_schema,
)

TREE_FORMAT_VERSION = "1"

# (ancestor schema, descendant schema) -> is the ancestor a subproblem?
SubproblemJudge = Callable[[NodeSchema, NodeSchema], bool]


@dataclass(frozen=True)
class TreeStats:
    """Node count, depth in edges, and mean fan-out of internal nodes."""

    node_count: int
    depth: int
    avg_degree: float


@dataclass
class TreeNode:
    node_id: str
    schema: NodeSchema
    parent: str | None
    children: list[str] = field(default_factory=list)


class ModelingTree:
    """Rooted taxonomy of node schemas with stable generated node ids.

    Node ids are content-independent counter strings, never reused, so
    renaming a problem category can never rewire the tree.
    """

    def __init__(self) -> None:
        self._nodes: dict[str, TreeNode] = {}
        self._types: dict[str, str] = {}
        self._counter = 0
        root_id = self._next_id()
        root = TreeNode(node_id=root_id, schema=root_schema(), parent=None)
        self._nodes[root_id] = root
        self._types[root.schema.problem_type] = root_id
        self._root_id = root_id

    # -- reads ------------------------------------------------------------

    @property
    def root_id(self) -> str:
        return self._root_id

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node_ids(self) -> list[str]:
        return sorted(self._nodes)

    def schema_of(self, node_id: str) -> NodeSchema:
        return self._node(node_id).schema

    def parent_of(self, node_id: str) -> str | None:
        return self._node(node_id).parent

    def children_of(self, node_id: str) -> tuple[str, ...]:
        return tuple(self._node(node_id).children)

    def find_type(self, problem_type: str) -> str | None:
        return self._types.get(problem_type)

    def ancestors_of(self, node_id: str) -> list[str]:
        """Proper ancestors from parent up to the root."""
        chain = []
        current = self._node(node_id).parent
        while current is not None:
            chain.append(current)
            current = self._nodes[current].parent
        return chain

    def snapshot(self) -> "ModelingTree":
        """Independent deep copy for concurrent readers."""
        return copy.deepcopy(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelingTree):
            return NotImplemented
        if self._root_id != other._root_id:
            return False
        if set(self._nodes) != set(other._nodes):
            return False
        for node_id, node in self._nodes.items():
            theirs = other._nodes[node_id]
            if (
                node.schema != theirs.schema
                or node.parent != theirs.parent
                or node.children != theirs.children
            ):
                return False
        return True

    def _node(self, node_id: str) -> TreeNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def _next_id(self) -> str:
        node_id = f"n{self._counter:04d}"
        self._counter += 1
        return node_id

    # -- mutation ---------------------------------------------------------

    def add_node(
        self,
        parent_id: str,
        schema: NodeSchema,
        reparent: Iterable[str] = (),
    ) -> str:
        """Insert ``schema`` as a child of ``parent_id``.

        Every id in ``reparent`` (which must currently be a child of the
        parent) becomes a child of the new node; the parent's remaining
        children stay siblings of the new node. Returns the new node id.
        """
        if parent_id not in self._nodes:
            raise UnknownParent(f"no node {parent_id!r} in tree")
        parent = self._nodes[parent_id]
        reparent_ids = list(dict.fromkeys(reparent))
        for rid in reparent_ids:
            if rid not in parent.children:
                raise NotAChild(f"{rid!r} is not a child of {parent_id!r}")
        if schema.problem_type in self._types:
            raise DuplicateType(
                f"problem type {schema.problem_type!r} already in tree"
            )
        violations = validate_schema(schema)
        if violations:
            raise InvariantViolation(
                "schema fails invariants: " + "; ".join(map(str, violations))
            )

        new_id = self._next_id()
        node = TreeNode(node_id=new_id, schema=schema, parent=parent_id)
        # Reparented children keep their relative order under the new node.
        node.children = [rid for rid in parent.children if rid in reparent_ids]
        parent.children = [c for c in parent.children if c not in reparent_ids]
        parent.children.append(new_id)
        for rid in node.children:
            self._nodes[rid].parent = new_id
        self._nodes[new_id] = node
        self._types[schema.problem_type] = new_id
        return new_id

    # -- invariants and statistics -----------------------------------------

    def check_order_preserving(
        self, judge: SubproblemJudge
    ) -> list[tuple[str, str]]:
        """Every (ancestor, descendant) pair failing the subproblem judge.

        Pairs involving the root are excluded; the root is the abstract
        problem class and carries no comparable thoughts. An empty result
        means the tree is subproblem order-preserving under ``judge``.
        """
        violations: list[tuple[str, str]] = []
        for node_id in self.node_ids():
            if node_id == self._root_id:
                continue
            descendant = self._nodes[node_id].schema
            for ancestor_id in self.ancestors_of(node_id):
                if ancestor_id == self._root_id:
                    continue
                ancestor = self._nodes[ancestor_id].schema
                if not judge(ancestor, descendant):
                    violations.append((ancestor_id, node_id))
        return violations

    def depth_of(self, node_id: str) -> int:
        return len(self.ancestors_of(node_id))

    def stats(self) -> TreeStats:
        depth = 0
        internal_degrees: list[int] = []
        for node_id, node in self._nodes.items():
            depth = max(depth, self.depth_of(node_id))
            if node.children:
                internal_degrees.append(len(node.children))
        avg = (
            sum(internal_degrees) / len(internal_degrees)
            if internal_degrees
            else 0.0
        )
        return TreeStats(node_count=len(self._nodes), depth=depth, avg_degree=avg)

    def validate(self) -> list[str]:
        """Structural invariant check; list of problems, empty when sound."""
        problems: list[str] = []
        roots = [n for n in self._nodes.values() if n.parent is None]
        if len(roots) != 1:
            problems.append(f"expected exactly one root, found {len(roots)}")
        if self._root_id not in self._nodes:
            problems.append(f"root id {self._root_id!r} missing from node map")
        seen_types: dict[str, str] = {}
        for node_id, node in self._nodes.items():
            if node.node_id != node_id:
                problems.append(f"node {node_id!r} disagrees with its key")
            if len(set(node.children)) != len(node.children):
                problems.append(f"node {node_id!r} has duplicate children")
            for child in node.children:
                if child not in self._nodes:
                    problems.append(f"{node_id!r} lists missing child {child!r}")
                elif self._nodes[child].parent != node_id:
                    problems.append(
                        f"child {child!r} does not point back to {node_id!r}"
                    )
            if node.parent is not None:
                if node.parent not in self._nodes:
                    problems.append(f"{node_id!r} has missing parent")
                elif node_id not in self._nodes[node.parent].children:
                    problems.append(
                        f"{node_id!r} absent from its parent's child list"
                    )
            prev = seen_types.get(node.schema.problem_type)
            if prev is not None:
                problems.append(
                    f"duplicate problem type {node.schema.problem_type!r} "
                    f"on {prev!r} and {node_id!r}"
                )
            seen_types[node.schema.problem_type] = node_id
        # Reachability doubles as the acyclicity check.
        reachable = set()
        stack = [self._root_id] if self._root_id in self._nodes else []
        while stack:
            current = stack.pop()
            if current in reachable:
                problems.append(f"cycle detected at {current!r}")
                break
            reachable.add(current)
            stack.extend(self._nodes[current].children)
        if not problems and reachable != set(self._nodes):
            unreachable = sorted(set(self._nodes) - reachable)
            problems.append(f"unreachable nodes: {unreachable}")
        return problems

    # -- persistence --------------------------------------------------------

    def to_document(self) -> str:
        """Serialize to the versioned persistence document, stable id order."""
        problems = self.validate()
        if problems:
            raise InvariantViolation("; ".join(problems))
        record = {
            "version": TREE_FORMAT_VERSION,
            "root": self._root_id,
            "nodes": [
                {
                    "id": node_id,
                    "parent": self._nodes[node_id].parent,
                    "children": list(self._nodes[node_id].children),
                    "schema": schema_to_record(self._nodes[node_id].schema),
                }
                for node_id in self.node_ids()
            ],
        }
        return json.dumps(record, ensure_ascii=False, indent=2)

    @classmethod
    def from_document(cls, document: str) -> "ModelingTree":
        """Parse and validate a persistence document.

        Invalid trees are rejected, never repaired; a silent repair here
        would mask bugs in the update rules that produced the document.
        """
        try:
            record = json.loads(document)
        except ValueError as exc:
            raise MalformedDocument(f"tree document is not valid JSON: {exc}")
        if not isinstance(record, dict):
            raise MalformedDocument("tree document must be a JSON object")
        for key in ("version", "root", "nodes"):
            if key not in record:
                raise MalformedDocument(f"tree document lacks {key!r}")
        if record["version"] != TREE_FORMAT_VERSION:
            raise MalformedDocument(
                f"unsupported tree format version {record['version']!r}"
            )
        tree = cls.__new__(cls)
        tree._nodes = {}
        tree._types = {}
        tree._root_id = str(record["root"])
        max_suffix = -1
        for entry in record["nodes"]:
            if not isinstance(entry, dict) or "id" not in entry:
                raise MalformedDocument("node entry lacks an id")
            node_id = str(entry["id"])
            if node_id in tree._nodes:
                raise InvariantViolation(f"duplicate node id {node_id!r}")
            parent = entry.get("parent")
            schema = schema_from_record(entry.get("schema", {}))
            node = TreeNode(
                node_id=node_id,
                schema=schema,
                parent=None if parent is None else str(parent),
                children=[str(c) for c in entry.get("children", [])],
            )
            tree._nodes[node_id] = node
            tree._types[schema.problem_type] = node_id
            m = re.fullmatch(r"n(\d+)", node_id)
            if m:
                max_suffix = max(max_suffix, int(m.group(1)))
        tree._counter = max(max_suffix + 1, len(tree._nodes))
        problems = tree.validate()
        if problems:
            raise InvariantViolation("; ".join(problems))
        return tree


def new_tree() -> ModelingTree:
    """A tree holding only the reserved root."""
    return ModelingTree()


def save_tree(tree: ModelingTree) -> str:
    return tree.to_document()


def load_tree(document: str) -> ModelingTree:
    return ModelingTree.from_document(document)
