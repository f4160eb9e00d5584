"""Synthetic task world: contrast-pool generator and simulated model backends.

Every synthetic subtask has a hidden difficulty tier and a hidden answer.
Its wording is drawn from a tier-specific vocabulary, so a router can learn
the tier from text. The simulated backends answer a subtask correctly with a
probability that depends on the model tier and the task tier, and report
log-normally distributed token usage. Draws are keyed by a hash of the seed
and the task a call is about, so repeated runs are identical and different
routing policies face the same luck on the same subtask.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import prompts
from .backends import BackendSet, Generation
from .errors import InvalidCount
from .graph import ACTIONS, UNSOLVED_MARKER, Action, Tier, TokenUsage, render_packet
from .pool import TraceRecord

# phase -> (median total tokens, share of the total that is input)
DEFAULT_CALL_COSTS = {
    "IO": (60.0, 0.8),
    "CoT": (700.0, 0.2),
    "Subtask": (2500.0, 0.1),
    "Decompose": (400.0, 0.5),
    "SolveWithPlan": (1200.0, 0.3),
    "Synthesis": (300.0, 0.6),
    "Judge": (80.0, 0.8),
}


@dataclass(frozen=True)
class SyntheticProfile:
    """Generator parameters shared by the pool and the simulated backends."""

    tier_mix: tuple[float, float, float] = (0.25, 0.5, 0.25)
    # success probability by task tier for each action
    success: dict[Action, tuple[float, float, float]] = field(default_factory=lambda: {
        Action.IO: (0.95, 0.05, 0.02),
        Action.COT: (0.90, 0.90, 0.10),
        Action.DECOMPOSE: (0.95, 0.95, 0.95),
    })
    # log-normal pool cost per action: (median tokens, sigma of log)
    cost: dict[Action, tuple[float, float]] = field(default_factory=lambda: {
        Action.IO: (60.0, 0.25),
        Action.COT: (700.0, 0.25),
        Action.DECOMPOSE: (2500.0, 0.25),
    })
    call_costs: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_CALL_COSTS))
    call_sigma: float = 0.25
    fallback_success: float = 0.95
    synthesis_success: float = 1.0
    parts: tuple[int, int] = (2, 4)
    depth2_share: float = 0.2

    def to_dict(self) -> dict:
        return {
            "tier_mix": list(self.tier_mix),
            "success": {a.value: list(v) for a, v in self.success.items()},
            "cost": {a.value: list(v) for a, v in self.cost.items()},
            "call_costs": {k: list(v) for k, v in self.call_costs.items()},
            "call_sigma": self.call_sigma,
            "fallback_success": self.fallback_success,
            "synthesis_success": self.synthesis_success,
            "parts": list(self.parts),
            "depth2_share": self.depth2_share,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticProfile":
        base = cls()
        kw: dict[str, Any] = {}
        if "tier_mix" in d:
            kw["tier_mix"] = tuple(float(x) for x in d["tier_mix"])
        if "success" in d:
            succ = dict(base.success)
            succ.update({Action(k): tuple(float(x) for x in v) for k, v in d["success"].items()})
            kw["success"] = succ
        if "cost" in d:
            cost = dict(base.cost)
            cost.update({Action(k): tuple(float(x) for x in v) for k, v in d["cost"].items()})
            kw["cost"] = cost
        if "call_costs" in d:
            cc = dict(base.call_costs)
            cc.update({k: tuple(float(x) for x in v) for k, v in d["call_costs"].items()})
            kw["call_costs"] = cc
        for key in ("call_sigma", "fallback_success", "synthesis_success", "depth2_share"):
            if key in d:
                kw[key] = float(d[key])
        if "parts" in d:
            kw["parts"] = tuple(int(x) for x in d["parts"])
        return cls(**kw)


def load_profile(path) -> SyntheticProfile:
    with open(path, encoding="utf-8") as fh:
        return SyntheticProfile.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# task text
# ---------------------------------------------------------------------------

_VERBS = (
    ("look up", "recall", "name", "state", "read off", "identify"),
    ("compute", "estimate", "convert", "compare", "calculate", "tally"),
    ("prove", "derive", "reconcile", "design", "justify", "optimize"),
)
_OBJECTS = (
    ("the capital of", "the color of", "the founding year of", "the author of", "the label on"),
    ("the total cost of", "the ratio between", "the average speed of", "the net change in",
     "the combined weight of"),
    ("a multi-stage argument about", "a consistent schedule for", "the hidden constraint behind",
     "an invariant governing", "a counterexample involving"),
)
_NOUNS = ("the river town", "the old ledger", "the northern depot", "the cargo fleet",
          "the city archive", "the harbor crane", "the mountain line", "the glass factory",
          "the western market", "the survey team")
_EXTRAS = (
    ("", "", "quickly"),
    ("using the given figures", "with two steps", "from the table values"),
    ("across every branch of the case", "while keeping all earlier conclusions",
     "under the conflicting reports"),
)

_TAG_RE = re.compile(r"\[(t[0-9a-z.\-]+)\]")


def make_task(rng: np.random.Generator, tier: int, tag: str) -> str:
    verb = _VERBS[tier][rng.integers(len(_VERBS[tier]))]
    obj = _OBJECTS[tier][rng.integers(len(_OBJECTS[tier]))]
    noun = _NOUNS[rng.integers(len(_NOUNS))]
    extra = _EXTRAS[tier][rng.integers(len(_EXTRAS[tier]))]
    words = [verb, obj, noun]
    if extra:
        words.append(extra)
    return " ".join(words) + f" [{tag}]"


def _h(*parts: Any) -> bytes:
    return hashlib.sha256("\x00".join(str(p) for p in parts).encode("utf-8")).digest()


def _uniform(*parts: Any) -> float:
    return int.from_bytes(_h(*parts)[:8], "big") / 2.0 ** 64


def _normal(*parts: Any) -> float:
    u1 = max(_uniform("n1", *parts), 1e-300)
    u2 = _uniform("n2", *parts)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def answer_token(content: str) -> str:
    return "ans-" + _h("answer", content).hex()[:8]


def wrong_token(content: str, salt: Any) -> str:
    return "err-" + _h("wrong", content, salt).hex()[:8]


def _tier_draw(rng: np.random.Generator, mix) -> int:
    return int(rng.choice(3, p=np.asarray(mix, dtype=np.float64) / sum(mix)))


@dataclass
class SyntheticQuestion:
    qid: str
    text: str
    parts: list[str]
    tiers: list[int]
    reference: str

    def to_ref(self) -> dict:
        return {"question_id": self.qid, "question": self.text, "reference": self.reference}


def question_text(qid: str, n_parts: int) -> str:
    return f"Question {qid}: combine the findings of {n_parts} parts into one result."


def root_summary(qid: str) -> str:
    return f"Resolve each part of {qid} and combine the findings."


# ---------------------------------------------------------------------------
# pool
# ---------------------------------------------------------------------------


def _lognormal(rng: np.random.Generator, median: float, sigma: float) -> int:
    if sigma <= 0:
        return max(1, int(round(median)))
    return max(1, int(round(median * math.exp(sigma * rng.standard_normal()))))


def generate_pool(n: int, seed: int, profile: SyntheticProfile | None = None) -> list[TraceRecord]:
    """Deterministic synthetic contrast pool of ``n`` packed subtask instances."""
    if n < 1:
        raise InvalidCount(f"pool size must be >= 1, got {n}")
    profile = profile or SyntheticProfile()
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        qid = f"p{seed}x{i}"
        tier = _tier_draw(rng, profile.tier_mix)
        n_parts = int(rng.integers(profile.parts[0], profile.parts[1] + 1))
        content = make_task(rng, tier, f"t{qid}.{int(rng.integers(n_parts)) + 1}")
        depth = 2 if rng.random() < profile.depth2_share else 1
        summary = root_summary(qid) if depth == 1 else f"Split t{qid} into steps."
        packet = render_packet(question_text(qid, n_parts), summary, "", [], content)
        correct = {a: int(rng.random() < profile.success[a][tier]) for a in ACTIONS}
        cost = {a: _lognormal(rng, *profile.cost[a]) for a in ACTIONS}
        records.append(TraceRecord(f"syn-{seed}-{i}", packet, correct, cost, "synthetic",
                                   tier=tier, depth=depth))
    return records


def make_questions(n: int, seed: int, profile: SyntheticProfile | None = None,
                   tiers: list[int] | None = None) -> list[SyntheticQuestion]:
    """``n`` synthetic root questions; ``tiers`` forces every part to the given tiers."""
    if n < 1:
        raise InvalidCount(f"need at least one question, got {n}")
    profile = profile or SyntheticProfile()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        qid = f"q{seed}x{i}"
        if tiers is None:
            k = int(rng.integers(profile.parts[0], profile.parts[1] + 1))
            part_tiers = [_tier_draw(rng, profile.tier_mix) for _ in range(k)]
        else:
            part_tiers = list(tiers)
        parts = [make_task(rng, t, f"t{qid}.{j + 1}") for j, t in enumerate(part_tiers)]
        ref = "final-" + _h("ref", qid).hex()[:8]
        out.append(SyntheticQuestion(qid, question_text(qid, len(parts)), parts, part_tiers, ref))
    return out


# ---------------------------------------------------------------------------
# simulated backends
# ---------------------------------------------------------------------------

_QID_RE = re.compile(r"Question (q[0-9a-z]+):")
_TASK_RE = re.compile(r"^Task: (.*)$", re.M)
_ORIG_RE = re.compile(r"^Original question: (.*)$", re.M)
_CONTENT_RE = re.compile(r"^Problem Content: (.*)$", re.M)
_RESULT_RE = re.compile(r"^- \[[^\]]+\] .* => (.*)$")


@dataclass
class _Task:
    tier: int
    answer: str
    children: list[str] | None = None


class SyntheticWorld:
    """Ground truth for a set of synthetic questions plus the simulated model logic."""

    def __init__(self, questions: list[SyntheticQuestion], profile: SyntheticProfile | None = None,
                 seed: int = 0):
        self.profile = profile or SyntheticProfile()
        self.seed = seed
        self.questions = {q.qid: q for q in questions}
        self.tasks: dict[str, _Task] = {}
        for q in questions:
            for content, tier in zip(q.parts, q.tiers):
                self.tasks[content] = _Task(tier, answer_token(content))
        self._phase_of = self._phase_table()

    @staticmethod
    def _phase_table() -> dict[str, str]:
        t = prompts.templates()
        return {
            t["decompose_system"]: "Decompose",
            t["direct_system"]: "IO",
            t["cot_system"]: "CoT",
            t["subtask_system"]: "Subtask",
            t["fallback_system"]: "SolveWithPlan",
            t["synthesis_system"]: "Synthesis",
            t["judge_system"]: "Judge",
        }

    def backends(self) -> BackendSet:
        return BackendSet(SimulatedBackend(self, Tier.SMALL), SimulatedBackend(self, Tier.MEDIUM),
                          SimulatedBackend(self, Tier.LARGE))

    # -- helpers ----------------------------------------------------------

    def phase(self, system: str) -> str:
        return self._phase_of.get(system, "Unknown")

    def usage_key(self, phase: str, prompt: str) -> str:
        """What a call's size depends on: the task it is about, not the exact prompt."""
        if phase == "Synthesis":
            m = _QID_RE.search(prompt)
        elif phase == "SolveWithPlan":
            m = _ORIG_RE.search(prompt)
        elif phase == "Decompose":
            m = _TASK_RE.search(prompt) or _CONTENT_RE.search(prompt)
        else:
            m = None
            tasks = _TASK_RE.findall(prompt)
            if tasks:
                return tasks[-1].strip()
        return m.group(1).strip() if m else prompt

    def usage(self, phase: str, prompt: str) -> TokenUsage:
        median, in_share = self.profile.call_costs.get(phase, (100.0, 0.5))
        key = self.usage_key(phase, prompt)
        total = max(2, int(round(median * math.exp(
            self.profile.call_sigma * _normal(self.seed, "cost", phase, key)))))
        u_in = max(1, int(round(total * in_share)))
        return TokenUsage(u_in, max(1, total - u_in))

    def _succeeds(self, p: float, *key: Any) -> bool:
        return _uniform(self.seed, "success", *key) < p

    def children_of(self, content: str) -> list[str]:
        task = self.tasks.get(content)
        if task is None:
            return []
        if task.children is None:
            m = _TAG_RE.search(content)
            base = m.group(1) if m else "t" + _h("tag", content).hex()[:6]
            rng = np.random.default_rng(int.from_bytes(_h("kids", self.seed, content)[:8], "big"))
            kid_tiers = [max(task.tier - 1, 0), 0]
            kids = []
            for j, t in enumerate(kid_tiers):
                kid = make_task(rng, t, f"{base}-{j + 1}")
                self.tasks.setdefault(kid, _Task(t, answer_token(kid)))
                kids.append(kid)
            task.children = kids
        return task.children

    def is_correct(self, content: str, result: str) -> bool:
        """Whether ``result`` is a correct resolution of ``content``."""
        task = self.tasks.get(content)
        if task is None or UNSOLVED_MARKER in result or "err-" in result:
            return False
        if task.answer in result:
            return True
        if task.children:
            return all(self.tasks[k].answer in result for k in task.children)
        return False

    # -- call handlers ----------------------------------------------------

    def respond(self, tier: Tier, system: str, prompt: str, max_tokens: int) -> Generation:
        phase = self.phase(system)
        usage = self.usage(phase, prompt)
        diag: dict[str, Any] = {"phase": phase}
        truncated = usage.output_tokens > max_tokens
        if truncated:
            usage = TokenUsage(usage.input_tokens, max(int(max_tokens), 0))
            diag["Truncated"] = True
        handler = getattr(self, f"_on_{phase.lower()}", None)
        reply = handler(tier, prompt, truncated) if handler else ""
        return Generation(reply, usage, diag)

    def _solve(self, action: Action, content: str, tier: Tier, truncated: bool) -> str:
        task = self.tasks.get(content)
        t = task.tier if task else 2
        ok = (not truncated and task is not None
              and self._succeeds(self.profile.success[action][t], action.value, tier.value, content))
        return task.answer if ok else wrong_token(content, action.value)

    def _task_content(self, prompt: str) -> str:
        m = _TASK_RE.findall(prompt)
        return m[-1].strip() if m else ""

    def _on_io(self, tier, prompt, truncated):
        return self._solve(Action.IO, self._task_content(prompt), tier, truncated)

    def _on_cot(self, tier, prompt, truncated):
        ans = self._solve(Action.COT, self._task_content(prompt), tier, truncated)
        if truncated:
            return "Let me work through this step by step. First"
        return f"Let me work through this step by step.\n<answer>{ans}</answer>"

    def _on_subtask(self, tier, prompt, truncated):
        return self._solve(Action.DECOMPOSE, self._task_content(prompt), tier, truncated)

    def _on_decompose(self, tier, prompt, truncated):
        m = _CONTENT_RE.search(prompt)
        content = m.group(1).strip() if m else ""
        qm = _QID_RE.search(content)
        if qm and qm.group(1) in self.questions and "Root Flag: true" in prompt:
            q = self.questions[qm.group(1)]
            subtasks = [{"content": p, "evidence": ""} for p in q.parts]
            summary = root_summary(q.qid)
            return json.dumps({"root_summary": summary, "branch_summary": summary,
                               "subtasks": subtasks})
        # non-root: the packet's task line names the subtask being split
        task_content = self._task_content(prompt) or content
        kids = self.children_of(task_content)
        if not kids:
            return "I cannot split this task."
        return json.dumps({
            "root_summary": "",
            "branch_summary": "Solve each step of the parent task.",
            "subtasks": [{"content": k, "evidence": ""} for k in kids],
        })

    def _on_solvewithplan(self, tier, prompt, truncated):
        m = _ORIG_RE.search(prompt)
        content = m.group(1).strip() if m else ""
        task = self.tasks.get(content)
        ok = (not truncated and task is not None
              and self._succeeds(self.profile.fallback_success, "fallback", content))
        return task.answer if ok else wrong_token(content, "fallback")

    def _on_synthesis(self, tier, prompt, truncated):
        qm = _QID_RE.search(prompt)
        q = self.questions.get(qm.group(1)) if qm else None
        if q is None:
            return "Answer: unknown"
        lines = [ln for ln in prompt.splitlines() if ln.startswith("- [")]
        ok = len(lines) == len(q.parts) and not truncated
        if ok:
            for part, line in zip(q.parts, lines):
                m = _RESULT_RE.match(line)
                if m is None or part not in line or not self.is_correct(part, m.group(1)):
                    ok = False
                    break
        ok = ok and self._succeeds(self.profile.synthesis_success, "synthesis", q.qid)
        answer = q.reference if ok else wrong_token(q.qid, "synthesis")
        return f"Combining the sub-task results.\nAnswer: {answer}"

    def _on_judge(self, tier, prompt, truncated):
        m1 = re.search(r"^Answer 1: (.*)$", prompt, re.M)
        m2 = re.search(r"^Answer 2: (.*)$", prompt, re.M)
        same = bool(m1 and m2 and m1.group(1).strip().lower() == m2.group(1).strip().lower())
        return json.dumps({"is_equivalent": same, "reasoning": "token comparison"})


class SimulatedBackend:
    """One model tier of a :class:`SyntheticWorld`."""

    def __init__(self, world: SyntheticWorld, tier: Tier):
        self.world = world
        self.tier = tier
        self.name = f"synthetic-{tier.value}"

    def count_input(self, prompt: str, system: str = "") -> int:
        return self.world.usage(self.world.phase(system), prompt).input_tokens

    def generate(self, prompt: str, system: str = "", max_tokens: int = 1024,
                 temperature: float = 0.0, seed: int | None = None) -> Generation:
        return self.world.respond(self.tier, system, prompt, max_tokens)
