"""End-to-end budgeted graph execution over pluggable backends.

The run decomposes the root question with the large model, routes each
pending leaf through the router under the scheduler's node budget, expands
or falls back on decomposition, and finishes with one synthesis call funded
by the synthesis reserve. Every model call is logged in a :class:`RunTrace`.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from . import prompts
from .backends import BackendSet, Generation, ModelBackend
from .errors import BackendError, PlanParseError
from .graph import (
    ROOT,
    UNSOLVED_MARKER,
    Action,
    ReasoningGraph,
    Status,
    Tier,
    TokenUsage,
    format_result_line,
    new_graph,
    pack_node_input,
    render_packet,
)
from .scheduler import (
    BudgetState,
    Limits,
    branch_width,
    classify_hardness,
    depth_allowed,
    estimate_subtree,
    init_budget,
    node_budget,
    should_fallback,
)

log = logging.getLogger(__name__)

PHASE_DECOMPOSE = "Decompose"
PHASE_SUBTASK = "Subtask"
PHASE_FALLBACK = "SolveWithPlan"
PHASE_SYNTHESIS = "Synthesis"
PHASE_JUDGE = "Judge"

DEFAULT_MAX_TOKENS = {
    "IO": 128,
    "CoT": 1024,
    "Decompose": 1024,
    "SolveWithPlan": 1024,
    "Subtask": 4096,
}


@dataclass
class ExecutorConfig:
    max_tokens: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_MAX_TOKENS))
    temperature: float = 0.0
    seed: int | None = 0
    plan_retries: int = 1
    update_estimator: bool = True
    min_call_tokens: int = 1
    reserve_synthesis_input: bool = True


@dataclass
class RunConfig:
    b_total: float = 20000
    alpha_syn: float = 0.1
    b_min: float = 512
    hardness_margin: float = 1.0
    limits: Limits = field(default_factory=Limits)
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)

    def init_budget(self) -> BudgetState:
        return init_budget(self.b_total, self.alpha_syn, self.b_min, self.limits,
                           self.hardness_margin)


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class TraceEvent:
    seq: int
    node_id: str
    depth: int
    phase: str
    tier: str
    usage: TokenUsage
    status: str
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_dict(self, run_id: str) -> dict:
        return {
            "run_id": run_id,
            "seq": self.seq,
            "node_id": self.node_id,
            "depth": self.depth,
            "phase": self.phase,
            "tier": self.tier,
            "input_tokens": self.usage.input_tokens,
            "output_tokens": self.usage.output_tokens,
            "status": self.status,
            "diagnostics": _plain(self.diagnostics),
        }


@dataclass
class RunTrace:
    run_id: str
    events: list[TraceEvent] = field(default_factory=list)
    final_answer: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    def add(self, node_id: str, depth: int, phase: str, tier: Tier | str, usage: TokenUsage,
            status: str, diagnostics: dict | None = None) -> TraceEvent:
        ev = TraceEvent(len(self.events), node_id, depth, phase,
                        tier.value if isinstance(tier, Tier) else str(tier), usage, status,
                        dict(diagnostics or {}))
        self.events.append(ev)
        return ev

    @property
    def totals(self) -> TokenUsage:
        total = TokenUsage()
        for ev in self.events:
            if ev.phase != PHASE_JUDGE:
                total = total + ev.usage
        return total

    def to_lines(self) -> list[str]:
        lines = [json.dumps(ev.to_dict(self.run_id), ensure_ascii=False) for ev in self.events]
        t = self.totals
        final = {
            "run_id": self.run_id,
            "final_answer": self.final_answer,
            "total_input": t.input_tokens,
            "total_output": t.output_tokens,
        }
        if self.meta:
            final["meta"] = _plain(self.meta)
        lines.append(json.dumps(final, ensure_ascii=False))
        return lines

    def to_jsonl(self) -> str:
        return "\n".join(self.to_lines()) + "\n"


def write_traces(traces: Iterable[RunTrace], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tr in traces:
            fh.write(tr.to_jsonl())


def read_traces(path) -> list[RunTrace]:
    """Parse a trace JSONL file (one or many runs) back into :class:`RunTrace` objects."""
    runs: dict[str, RunTrace] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if not raw.strip():
                continue
            obj = json.loads(raw)
            rid = obj["run_id"]
            if rid not in runs:
                runs[rid] = RunTrace(rid)
                order.append(rid)
            tr = runs[rid]
            if "final_answer" in obj:
                tr.final_answer = obj["final_answer"]
                tr.meta = obj.get("meta", {})
            else:
                tr.events.append(TraceEvent(
                    obj["seq"], obj["node_id"], obj["depth"], obj["phase"], obj["tier"],
                    TokenUsage(obj["input_tokens"], obj["output_tokens"]), obj["status"],
                    obj.get("diagnostics", {}),
                ))
    return [runs[r] for r in order]


# ---------------------------------------------------------------------------
# plans and single calls
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Subtask:
    content: str
    evidence: str = ""


@dataclass
class Plan:
    root_summary: str
    branch_summary: str
    subtasks: list[Subtask]
    diagnostics: dict[str, Any] = field(default_factory=dict)


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)


def _load_json_object(text: str):
    candidates = [text.strip()]
    candidates += [m.strip() for m in _FENCE_RE.findall(text)]
    lo, hi = text.find("{"), text.rfind("}")
    if 0 <= lo < hi:
        candidates.append(text[lo:hi + 1])
    for c in candidates:
        try:
            obj = json.loads(c)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise PlanParseError("planner output contains no JSON object")


def _text_field(obj: dict, *keys: str) -> str:
    for k in keys:
        v = obj.get(k)
        if isinstance(v, str):
            return v
        if isinstance(v, list) and all(isinstance(x, str) for x in v):
            return "\n".join(v)
    return ""


def parse_plan(text: str, k_max: int, is_root: bool) -> Plan:
    """Parse and validate planner output, truncating to ``k_max`` subtasks."""
    obj = _load_json_object(text)
    raw = obj.get("subtasks")
    if not isinstance(raw, list) or not raw:
        raise PlanParseError("'subtasks' must be a non-empty list")
    subtasks = []
    for item in raw:
        if isinstance(item, str):
            content, evidence = item, ""
        elif isinstance(item, dict):
            content = _text_field(item, "content", "task", "subtask", "description")
            evidence = _text_field(item, "evidence")
        else:
            raise PlanParseError(f"unsupported subtask item {item!r}")
        if not content.strip():
            raise PlanParseError("subtask with empty content")
        subtasks.append(Subtask(content.strip(), evidence.strip()))
    root_summary = obj.get("root_summary") if isinstance(obj.get("root_summary"), str) else ""
    branch_summary = obj.get("branch_summary") if isinstance(obj.get("branch_summary"), str) else ""
    if is_root and not root_summary.strip():
        raise PlanParseError("root plan needs a non-empty root_summary")
    if not is_root and not branch_summary.strip():
        raise PlanParseError("plan needs a non-empty branch_summary")
    diag: dict[str, Any] = {}
    if len(subtasks) > k_max:
        diag["truncated_from"] = len(subtasks)
        subtasks = subtasks[:k_max]
    return Plan(root_summary.strip(), branch_summary.strip(), subtasks, diag)


def decompose(backend: ModelBackend, packet: str, k_max: int, is_root: bool,
              max_tokens: int = DEFAULT_MAX_TOKENS["Decompose"], retry: bool = False,
              temperature: float = 0.0, seed: int | None = None):
    """One planner call. Returns ``(Plan, TokenUsage)``; raises PlanParseError."""
    if not 1 <= k_max <= 5:
        raise ValueError(f"k_max must be in [1, 5], got {k_max}")
    system, user = prompts.decompose(packet, is_root, retry=retry)
    gen = backend.generate(user, system, max_tokens, temperature, seed)
    return parse_plan(gen.text, k_max, is_root), gen.usage


_ANSWER_TAG_RE = re.compile(r"<answer>(.*?)</answer>", re.S | re.I)
_ANSWER_LINE_RE = re.compile(r"^\s*Answer:\s*(.*?)\s*$", re.I)


def extract_tagged(text: str) -> tuple[str, dict]:
    tags = _ANSWER_TAG_RE.findall(text)
    if tags:
        return tags[-1].strip(), {}
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    return (lines[-1] if lines else ""), {"TagMissing": True}


def extract_answer_line(text: str) -> tuple[str, dict]:
    for line in reversed(text.splitlines()):
        m = _ANSWER_LINE_RE.match(line)
        if m:
            return m.group(1), {}
    return text.strip(), {"AnswerLineMissing": True}


def action_prompt(action: Action, packet: str) -> tuple[str, str, str]:
    """``(phase, system, user)`` for executing ``action`` on a node in one call."""
    if action is Action.IO:
        return "IO", *prompts.direct(packet)
    if action is Action.COT:
        return "CoT", *prompts.cot(packet)
    return PHASE_SUBTASK, *prompts.subtask(packet)


def postprocess(action: Action, text: str) -> tuple[str, dict]:
    if action is Action.IO:
        return text.strip(), {}
    if action is Action.COT:
        return extract_tagged(text)
    if _ANSWER_TAG_RE.search(text):
        return extract_tagged(text)
    return text.strip(), {}


def execute_action(backends: BackendSet, action: Action, packet: str, max_tokens: int,
                   temperature: float = 0.0, seed: int | None = None):
    """Run a node in a single call. Returns ``(result, TokenUsage, diagnostics)``.

    IO uses the small model, CoT the medium model; Decompose executed atomically
    (no expansion allowed) uses the large model with the sub-task template.
    """
    _, system, user = action_prompt(action, packet)
    gen = backends.for_tier(action.tier).generate(user, system, max_tokens, temperature, seed)
    result, diag = postprocess(action, gen.text)
    return result, gen.usage, {**gen.diagnostics, **diag}


def solve_with_plan(backend: ModelBackend, question: str, summary: str, plan: Plan,
                    max_tokens: int = DEFAULT_MAX_TOKENS["SolveWithPlan"],
                    temperature: float = 0.0, seed: int | None = None):
    system, user = prompts.fallback(question, summary, plan.subtasks)
    gen = backend.generate(user, system, max_tokens, temperature, seed)
    return gen.text.strip(), gen.usage


def synthesis_lines(graph: ReasoningGraph) -> list[str]:
    lines = []
    for node in graph.first_layer():
        if node.status is Status.SOLVED:
            res = " | ".join(ln.strip() for ln in (node.result or "").splitlines() if ln.strip())
        else:
            res = UNSOLVED_MARKER
        lines.append(f"- [{node.id}] {node.content} => {res}")
    return lines


def synthesize(backend: ModelBackend, graph: ReasoningGraph, question: str, max_tokens: int,
               temperature: float = 0.0, seed: int | None = None):
    """Final aggregation call. Returns ``(answer, TokenUsage, diagnostics)``."""
    system, user = prompts.synthesis(question, synthesis_lines(graph))
    gen = backend.generate(user, system, max_tokens, temperature, seed)
    answer, diag = extract_answer_line(gen.text)
    return answer, gen.usage, {**gen.diagnostics, **diag}


# ---------------------------------------------------------------------------
# the run loop
# ---------------------------------------------------------------------------


class _NotAdmitted(Exception):
    pass


class Executor:
    """Sequential reference executor; one instance per run."""

    def __init__(self, question: str, config: RunConfig, backends: BackendSet, router,
                 run_id: str = "run"):
        self.question = question
        self.cfg = config
        self.xcfg = config.executor
        self.backends = backends
        self.router = router
        self.state = config.init_budget()
        lim = config.limits
        self.graph = new_graph(question, max_depth=lim.max_depth, max_nodes=lim.max_nodes,
                               max_branch=lim.max_branch)
        self.trace = RunTrace(run_id, meta={"scheduler": self.state.to_dict()})
        self._input_len: dict[str, int] = {}

    # -- calls ------------------------------------------------------------

    def _call(self, backend: ModelBackend, system: str, user: str, phase: str,
              node_id: str, depth: int, budget_key: str, diag: dict | None = None,
              status: str = "") -> Generation:
        """Dispatch one node-level call whose output is capped to fit the remaining budget."""
        default = self.xcfg.max_tokens[budget_key]
        ceiling = self.state.remaining() - self._synthesis_input()
        need_in = backend.count_input(user, system)
        max_tokens = int(min(default, ceiling - need_in))
        if max_tokens < self.xcfg.min_call_tokens:
            raise _NotAdmitted(phase)
        try:
            gen = backend.generate(user, system, max_tokens, self.xcfg.temperature, self.xcfg.seed)
        except BackendError as exc:
            exc.context.update(node_id=node_id, phase=phase)
            raise
        self.state.charge(gen.usage)
        if node_id != ROOT:
            self.graph.charge_node(node_id, gen.usage)
        d = {"max_tokens": max_tokens, **(diag or {}), **gen.diagnostics}
        self.trace.add(node_id, depth, phase, backend.tier, gen.usage, status, d)
        return gen

    def _synthesis_input(self) -> int:
        """Input tokens the synthesis prompt would cost now; kept out of node calls."""
        if not self.xcfg.reserve_synthesis_input:
            return 0
        system, user = prompts.synthesis(self.question, synthesis_lines(self.graph))
        return self.backends.large.count_input(user, system)

    def _plan(self, node_id: str, packet: str, k_max: int, is_root: bool, depth: int,
              diag: dict):
        """Planner call with one stricter retry. Returns a Plan or None on parse failure."""
        large = self.backends.large
        for attempt in range(self.xcfg.plan_retries + 1):
            system, user = prompts.decompose(packet, is_root, retry=attempt > 0)
            gen = self._call(large, system, user, PHASE_DECOMPOSE, node_id, depth,
                             "Decompose", {**diag, "k_max": k_max, "attempt": attempt},
                             status="Planned")
            try:
                plan = parse_plan(gen.text, k_max, is_root)
            except PlanParseError as exc:
                self.trace.events[-1].status = "PlanParseError"
                self.trace.events[-1].diagnostics["PlanParseError"] = str(exc)
                continue
            self.trace.events[-1].diagnostics.update(plan.diagnostics)
            return plan
        return None

    def _observe(self, action: Action, cost: int, input_len: int) -> None:
        if self.xcfg.update_estimator and cost > 0:
            self.router.estimator.observe(action, cost, input_len)

    # -- node handling ----------------------------------------------------

    def _execute(self, node_id: str, action: Action, packet: str, diag: dict) -> None:
        node = self.graph.node(node_id)
        phase, system, user = action_prompt(action, packet)
        backend = self.backends.for_tier(action.tier)
        gen = self._call(backend, system, user, phase, node_id, node.depth, phase, diag,
                         status=Status.SOLVED.value)
        result, extra = postprocess(action, gen.text)
        self.trace.events[-1].diagnostics.update(extra)
        self.graph.record_result(node_id, result)
        self._observe(action, gen.usage.total(), self._input_len[node_id])

    def _close_expanded(self, node_id: str) -> None:
        """Give an expanded node the results of its children, at no token cost."""
        kids = [self.graph.node(c) for c in self.graph.children(node_id)]
        if all(k.status is Status.UNSOLVED_BUDGET for k in kids):
            self.graph.mark_unsolved(node_id)
            return
        self.graph.record_result(node_id, "\n".join(format_result_line(k) for k in kids))
        subtree = self.graph.node(node_id).usage
        for d in self.graph.descendants(node_id):
            subtree = subtree + self.graph.node(d).usage
        self._observe(Action.DECOMPOSE, subtree.total(), self._input_len.get(node_id, 0))

    def _step(self, node_id: str) -> None:
        graph, state = self.graph, self.state
        node = graph.node(node_id)
        if graph.children(node_id):
            self._close_expanded(node_id)
            return
        packet = pack_node_input(graph, node_id)
        pred = self.router.predict(packet, node.depth)
        self._input_len[node_id] = pred.input_len
        budget = node_budget(state, pred.tier, self.router.caps())
        decision = self.router.choose(pred, budget)
        hardness = classify_hardness(pred.tier, pred.success_logits, state.hardness_margin)
        diag = {"action": decision.action.value, "hardness": hardness.value,
                **decision.diagnostics()}
        action = decision.action
        try:
            can_expand = (
                action is Action.DECOMPOSE
                and depth_allowed(node.depth, hardness, state.limits)
                and graph.node_count < state.limits.max_nodes
            )
            if not can_expand:
                self._execute(node_id, action, packet, diag)
                return
            k = min(branch_width(state, node.depth, graph.node_count),
                    state.limits.max_nodes - graph.node_count)
            plan = self._plan(node_id, packet, k, False, node.depth, diag)
            if plan is None:
                diag["PlanDowngrade"] = True
                self._execute(node_id, Action.COT, packet, diag)
                return
            children = [
                (render_packet(graph.root_question, plan.branch_summary, st.evidence, [],
                               st.content), node.depth + 1)
                for st in plan.subtasks
            ]
            estimate = estimate_subtree(children, self.router)
            self.trace.events[-1].diagnostics["subtree_estimate"] = estimate
            if should_fallback(state, estimate):
                gen = self._call(
                    self.backends.large, *prompts.fallback(node.content, node.summary,
                                                           plan.subtasks),
                    PHASE_FALLBACK, node_id, node.depth, "SolveWithPlan",
                    {"subtree_estimate": estimate, "remaining": state.remaining()},
                    status=Status.SOLVED.value,
                )
                graph.record_result(node_id, gen.text.strip())
                self._observe(Action.DECOMPOSE, graph.node(node_id).usage.total(),
                              pred.input_len)
            else:
                graph.add_children(node_id, [st.content for st in plan.subtasks],
                                   plan.branch_summary, [st.evidence for st in plan.subtasks])
                self.trace.events[-1].status = "Expanded"
        except _NotAdmitted:
            graph.mark_unsolved(node_id)

    def _finish_pending(self) -> None:
        while True:
            leaves = self.graph.pending_leaves()
            if not leaves:
                return
            for node_id in leaves:
                if self.graph.children(node_id):
                    self._close_expanded(node_id)
                else:
                    self.graph.mark_unsolved(node_id)

    def _root(self) -> None:
        state, graph = self.state, self.graph
        k_root = min(state.limits.max_branch, branch_width(state, 0, 0), state.limits.max_nodes)
        try:
            plan = self._plan(ROOT, self.question, k_root, True, 0, {})
        except _NotAdmitted:
            log.info("root plan does not fit the budget; synthesising directly")
            return
        if plan is not None:
            graph.add_children(ROOT, [st.content for st in plan.subtasks], plan.root_summary,
                               [st.evidence for st in plan.subtasks])
            self.trace.events[-1].status = "Expanded"
            return
        # planner failed twice: the whole question becomes one CoT node
        (node_id,) = graph.add_children(ROOT, [self.question], "", [""])
        packet = pack_node_input(graph, node_id)
        self._input_len[node_id] = self.router.predict(packet, 1).input_len
        try:
            self._execute(node_id, Action.COT, packet, {"PlanDowngrade": True})
        except _NotAdmitted:
            graph.mark_unsolved(node_id)

    def run(self) -> tuple[str, RunTrace]:
        self._root()
        while True:
            leaves = self.graph.pending_leaves()
            if not leaves or self.state.remaining() <= 0:
                break
            self._step(leaves[0])
        self._finish_pending()
        b_syn = int(self.state.b_syn)
        large = self.backends.large
        try:
            answer, usage, diag = synthesize(large, self.graph, self.question, b_syn,
                                             self.xcfg.temperature, self.xcfg.seed)
        except BackendError as exc:
            exc.context.update(node_id=ROOT, phase=PHASE_SYNTHESIS)
            raise
        self.state.charge(usage)
        self.trace.add(ROOT, 0, PHASE_SYNTHESIS, large.tier, usage, "Done",
                       {"max_tokens": b_syn, **diag})
        self.trace.final_answer = answer
        return answer, self.trace


def run(question: str, config: RunConfig, backends: BackendSet, router,
        run_id: str = "run") -> tuple[str, RunTrace]:
    """Execute one question end to end. Returns ``(final answer, RunTrace)``."""
    ex = Executor(question, config, backends, router, run_id)
    return ex.run()


def run_with_graph(question: str, config: RunConfig, backends: BackendSet, router,
                   run_id: str = "run"):
    ex = Executor(question, config, backends, router, run_id)
    answer, trace = ex.run()
    return answer, trace, ex.graph, ex.state
