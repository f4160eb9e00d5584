"""Directed reasoning graph: node store, lifecycle, and node input packing."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    DepthLimitExceeded,
    EmptyPlan,
    EmptyQuestion,
    InvalidTransition,
    NodeLimitExceeded,
    TooManySubtasks,
    UnknownNode,
)

ROOT = "root"
UNSOLVED_MARKER = "UNSOLVED_DUE_TO_BUDGET"
EMPTY_SECTION = "(none)"

DEFAULT_MAX_DEPTH = 3
DEFAULT_MAX_BRANCH = 5
DEFAULT_MAX_NODES = 50


class Tier(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


class Action(str, Enum):
    """Node-level routing action. Each action is bound to one model tier."""

    IO = "IO"
    COT = "CoT"
    DECOMPOSE = "Decompose"

    @property
    def tier(self) -> Tier:
        return _ACTION_TIER[self]

    @property
    def index(self) -> int:
        return _ACTION_INDEX[self]

    @classmethod
    def from_index(cls, i: int) -> "Action":
        return ACTIONS[i]


ACTIONS: tuple[Action, ...] = (Action.IO, Action.COT, Action.DECOMPOSE)
_ACTION_TIER = {Action.IO: Tier.SMALL, Action.COT: Tier.MEDIUM, Action.DECOMPOSE: Tier.LARGE}
_ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}


class Status(str, Enum):
    PENDING = "Pending"
    SOLVED = "Solved"
    UNSOLVED_BUDGET = "UnsolvedBudget"


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError(f"negative token usage: {self}")

    def total(self) -> int:
        return self.input_tokens + self.output_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens, self.output_tokens + other.output_tokens
        )

    def to_dict(self) -> dict:
        return {"input_tokens": self.input_tokens, "output_tokens": self.output_tokens}


@dataclass
class ReasoningNode:
    id: str
    depth: int
    content: str
    summary: str = ""
    evidence: str = ""
    parent_ids: list[str] = field(default_factory=list)
    status: Status = Status.PENDING
    result: str | None = None
    usage: TokenUsage = field(default_factory=TokenUsage)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "depth": self.depth,
            "content": self.content,
            "summary": self.summary,
            "evidence": self.evidence,
            "parent_ids": list(self.parent_ids),
            "status": self.status.value,
            "result": self.result,
            "usage": self.usage.to_dict(),
        }


class ReasoningGraph:
    """Incrementally built DAG of subtasks below an implicit root question.

    The root question is not a node: first-layer nodes sit at depth 1 and have
    no parents. Mutations are expected to come from a single writer.
    """

    def __init__(
        self,
        question: str,
        max_depth: int = DEFAULT_MAX_DEPTH,
        max_nodes: int = DEFAULT_MAX_NODES,
        max_branch: int = DEFAULT_MAX_BRANCH,
    ):
        if not question or not question.strip():
            raise EmptyQuestion("question must be non-empty")
        self.root_question = question
        self.max_depth = max_depth
        self.max_nodes = max_nodes
        self.max_branch = max_branch
        self.nodes: dict[str, ReasoningNode] = {}
        self.edges: dict[str, list[str]] = {ROOT: []}
        self._order: dict[str, int] = {}

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def max_depth_seen(self) -> int:
        return max((n.depth for n in self.nodes.values()), default=0)

    def node(self, node_id: str) -> ReasoningNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def children(self, node_id: str) -> list[str]:
        if node_id != ROOT:
            self.node(node_id)
        return list(self.edges.get(node_id, []))

    def first_layer(self) -> list[ReasoningNode]:
        return [self.nodes[i] for i in self.edges[ROOT]]

    def add_children(
        self,
        parent: str | None,
        subtasks: Sequence[str],
        branch_summary: str,
        evidence: Sequence[str] | None = None,
    ) -> list[str]:
        """Attach 1..max_branch pending children under ``parent`` (``ROOT`` or None for the root)."""
        if len(subtasks) == 0:
            raise EmptyPlan("a plan needs at least one subtask")
        if len(subtasks) > self.max_branch:
            raise TooManySubtasks(f"{len(subtasks)} subtasks > {self.max_branch}")
        if evidence is None:
            evidence = [""] * len(subtasks)
        if len(evidence) != len(subtasks):
            raise ValueError("evidence list must match subtasks in length")
        if parent is None or parent == ROOT:
            parent_ids: list[str] = []
            depth = 1
            edge_key = ROOT
        else:
            depth = self.node(parent).depth + 1
            parent_ids = [parent]
            edge_key = parent
        if depth > self.max_depth:
            raise DepthLimitExceeded(f"child depth {depth} > cap {self.max_depth}")
        if self.node_count + len(subtasks) > self.max_nodes:
            raise NodeLimitExceeded(
                f"{self.node_count} + {len(subtasks)} nodes > limit {self.max_nodes}"
            )
        ids = []
        for content, ev in zip(subtasks, evidence):
            node_id = f"n{self.node_count + 1}"
            self.nodes[node_id] = ReasoningNode(
                id=node_id,
                depth=depth,
                content=content,
                summary=branch_summary,
                evidence=ev or "",
                parent_ids=list(parent_ids),
            )
            self._order[node_id] = len(self._order)
            self.edges.setdefault(edge_key, []).append(node_id)
            self.edges.setdefault(node_id, [])
            ids.append(node_id)
        return ids

    def pending_leaves(self) -> list[str]:
        """Pending nodes with no pending descendant, by (depth, insertion order)."""
        pending_below: dict[str, bool] = {}
        # insertion order is a topological order, so walk it backwards
        for node_id in reversed(self.nodes):
            flag = False
            for child in self.edges.get(node_id, ()):
                if self.nodes[child].status is Status.PENDING or pending_below[child]:
                    flag = True
                    break
            pending_below[node_id] = flag
        leaves = [
            n for n in self.nodes.values()
            if n.status is Status.PENDING and not pending_below[n.id]
        ]
        leaves.sort(key=lambda n: (n.depth, self._order[n.id]))
        return [n.id for n in leaves]

    def pending_nodes(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.status is Status.PENDING]

    def charge_node(self, node_id: str, usage: TokenUsage) -> None:
        node = self.node(node_id)
        node.usage = node.usage + usage

    def record_result(self, node_id: str, result: str, usage: TokenUsage | None = None) -> None:
        node = self.node(node_id)
        if node.status is not Status.PENDING:
            raise InvalidTransition(f"{node_id} is {node.status.value}, not Pending")
        node.status = Status.SOLVED
        node.result = result
        if usage is not None:
            node.usage = node.usage + usage

    def mark_unsolved(self, node_id: str) -> None:
        node = self.node(node_id)
        if node.status is not Status.PENDING:
            raise InvalidTransition(f"{node_id} is {node.status.value}, not Pending")
        node.status = Status.UNSOLVED_BUDGET
        node.result = None

    def descendants(self, node_id: str) -> list[str]:
        out, stack, seen = [], list(self.edges.get(node_id, ())), set()
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            out.append(cur)
            stack.extend(self.edges.get(cur, ()))
        out.sort(key=self._order.__getitem__)
        return out

    def total_usage(self) -> TokenUsage:
        total = TokenUsage()
        for n in self.nodes.values():
            total = total + n.usage
        return total

    def to_dict(self) -> dict:
        edges = [[p, c] for p, cs in self.edges.items() for c in cs]
        return {
            "root_question": self.root_question,
            "nodes": [n.to_dict() for n in self.nodes.values()],
            "edges": edges,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def new_graph(question: str, **limits) -> ReasoningGraph:
    return ReasoningGraph(question, **limits)


def format_result_line(node: ReasoningNode) -> str:
    if node.status is Status.UNSOLVED_BUDGET:
        return f"{node.id}: {UNSOLVED_MARKER}"
    return f"{node.id}: {node.result}"


def _section(title: str, body: str) -> str:
    body = body if body and body.strip() else EMPTY_SECTION
    return f"=== {title} ===\n{body}"


def render_packet(
    question: str, summary: str, evidence: str, parent_lines: Iterable[str], content: str
) -> str:
    parents = "\n".join(parent_lines)
    return "\n\n".join(
        [
            _section("ORIGINAL QUESTION", question),
            _section("SUMMARY", summary),
            _section("EVIDENCE", evidence),
            _section("PARENT RESULTS", parents),
            f"Task: {content}",
        ]
    )


def pack_node_input(graph: ReasoningGraph, node_id: str) -> str:
    """Render a node as a standalone task: question, summary, evidence, parent results, task."""
    node = graph.node(node_id)
    lines = []
    for pid in node.parent_ids:
        parent = graph.node(pid)
        if parent.status is not Status.PENDING:
            lines.append(format_result_line(parent))
    return render_packet(graph.root_question, node.summary, node.evidence, lines, node.content)
