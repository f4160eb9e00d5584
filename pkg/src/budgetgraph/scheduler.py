"""Global budget scheduler: ledger, synthesis reserve, and expansion gating."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import BudgetTooSmall, EmptyPlan
from .graph import ACTIONS, DEFAULT_MAX_BRANCH, DEFAULT_MAX_DEPTH, DEFAULT_MAX_NODES, TokenUsage

DEFAULT_ALPHA_SYN = 0.1
DEFAULT_B_MIN = 512
DEFAULT_HARDNESS_MARGIN = 1.0


class Hardness(str, Enum):
    HARD = "Hard"
    SIMPLE = "Simple"


@dataclass(frozen=True)
class Limits:
    max_depth: int = DEFAULT_MAX_DEPTH
    max_branch: int = DEFAULT_MAX_BRANCH
    max_nodes: int = DEFAULT_MAX_NODES


@dataclass
class BudgetState:
    b_total: float
    b_syn: float
    c_acc: float = 0.0
    limits: Limits = field(default_factory=Limits)
    alpha_syn: float = DEFAULT_ALPHA_SYN
    b_min: float = DEFAULT_B_MIN
    hardness_margin: float = DEFAULT_HARDNESS_MARGIN

    def remaining(self) -> float:
        return self.b_total - self.c_acc - self.b_syn

    def charge(self, usage: TokenUsage) -> None:
        self.c_acc += usage.total()

    def should_expand(self) -> bool:
        return self.remaining() > 0

    def to_dict(self) -> dict:
        return {
            "b_total": self.b_total,
            "b_syn": self.b_syn,
            "alpha_syn": self.alpha_syn,
            "b_min": self.b_min,
            "hardness_margin": self.hardness_margin,
            "max_depth": self.limits.max_depth,
            "max_branch": self.limits.max_branch,
            "max_nodes": self.limits.max_nodes,
        }


def init_budget(
    b_total: float,
    alpha_syn: float = DEFAULT_ALPHA_SYN,
    b_min: float = DEFAULT_B_MIN,
    limits: Limits | None = None,
    hardness_margin: float = DEFAULT_HARDNESS_MARGIN,
) -> BudgetState:
    if not 0.0 <= alpha_syn < 1.0:
        raise ValueError(f"alpha_syn must be in [0, 1), got {alpha_syn}")
    if b_min < 0:
        raise ValueError("b_min must be non-negative")
    if b_total <= b_min:
        raise BudgetTooSmall(f"b_total={b_total} must exceed b_min={b_min}")
    b_syn = max(b_min, alpha_syn * b_total)
    return BudgetState(
        b_total=b_total,
        b_syn=b_syn,
        limits=limits or Limits(),
        alpha_syn=alpha_syn,
        b_min=b_min,
        hardness_margin=hardness_margin,
    )


def charge(state: BudgetState, usage: TokenUsage) -> None:
    state.charge(usage)


def remaining(state: BudgetState) -> float:
    return state.remaining()


def node_budget(state: BudgetState, tier: int, caps: Sequence[float]) -> float:
    """Effective node bound: the smaller of the remaining budget and the tier cap."""
    return min(state.remaining(), caps[tier])


def classify_hardness(tier: int, success_logits: Sequence[float],
                      margin: float = DEFAULT_HARDNESS_MARGIN) -> Hardness:
    if tier == 2:
        return Hardness.HARD
    f_io, f_cot, f_dec = (float(v) for v in success_logits)
    if f_dec - max(f_io, f_cot) > margin:
        return Hardness.HARD
    return Hardness.SIMPLE


def depth_allowed(node_depth: int, hardness: Hardness, limits: Limits) -> bool:
    """Whether a node at ``node_depth`` may decompose; depth 0 is the root."""
    if node_depth + 1 > limits.max_depth:
        return False
    return node_depth == 0 or hardness is Hardness.HARD


def branch_width(state: BudgetState, depth: int, node_count: int) -> int:
    rho = max(state.remaining(), 0.0) / state.b_total
    k_max = state.limits.max_branch
    k = math.ceil(k_max * rho) - depth - node_count // 10
    return max(1, min(k, k_max))


def estimate_subtree(children_packets: Sequence[tuple[str, int]], router) -> float:
    """Optimistic one-level cost of a plan: cheapest tier-feasible action per child.

    ``children_packets`` holds ``(packet, depth)`` pairs.
    """
    if not children_packets:
        raise EmptyPlan("cannot estimate an empty plan")
    caps = router.caps()
    total = 0.0
    for packet, depth in children_packets:
        pred = router.predict(packet, depth)
        est = router.estimator.estimates(pred.input_len)
        cap = caps[pred.tier]
        feasible = [est[a.index] for a in ACTIONS if est[a.index] <= cap]
        total += min(feasible) if feasible else est[0]
    return total


def should_fallback(state: BudgetState, subtree_estimate: float) -> bool:
    return subtree_estimate > state.remaining()
