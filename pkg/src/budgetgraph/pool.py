"""Three-strategy contrast pool: ingestion, and supervision targets built from it.

Every pool row records, for one task instance, whether each action solved it
and how many tokens it cost. From those rows we derive the required cost
(cheapest successful action), percentile tier thresholds, cumulative ordinal
targets, and budget-feasible soft targets for the policy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyFeasible,
    EmptyPool,
    MissingAction,
    NonPositiveCost,
    ParseError,
    PoolError,
)
from .graph import ACTIONS, Action

POOL_KEYS = {Action.IO: "io", Action.COT: "cot", Action.DECOMPOSE: "decompose"}
THRESHOLDS_VERSION = 1

DEFAULT_B25 = 185.0
DEFAULT_B75 = 1185.5
ALT_B75 = 1186.0  # value quoted for the same training pool in the dataset notes
DEFAULT_ALPHA_POL = 0.5


@dataclass(frozen=True)
class TraceRecord:
    instance_id: str
    input_text: str
    correct: dict[Action, int]
    cost: dict[Action, int]
    source: str = "synthetic"
    tier: int | None = None  # hidden generator tier, never used for training
    depth: int = 1

    def __post_init__(self):
        for a in ACTIONS:
            if a not in self.correct or a not in self.cost:
                raise MissingAction(f"record {self.instance_id!r} lacks action {a.value}")
            if self.cost[a] <= 0:
                raise NonPositiveCost(f"record {self.instance_id!r}: cost[{a.value}]={self.cost[a]}")

    @property
    def all_fail(self) -> bool:
        return not any(self.correct[a] for a in ACTIONS)

    def correct_vector(self) -> np.ndarray:
        return np.array([self.correct[a] for a in ACTIONS], dtype=np.float64)

    def cost_vector(self) -> np.ndarray:
        return np.array([self.cost[a] for a in ACTIONS], dtype=np.float64)

    def to_json(self) -> str:
        row = {
            "id": self.instance_id,
            "input": self.input_text,
            "correct": {POOL_KEYS[a]: int(self.correct[a]) for a in ACTIONS},
            "cost": {POOL_KEYS[a]: int(self.cost[a]) for a in ACTIONS},
            "source": self.source,
        }
        if self.tier is not None:
            row["tier"] = self.tier
        if self.depth != 1:
            row["depth"] = self.depth
        return json.dumps(row, ensure_ascii=False)


@dataclass(frozen=True)
class TierThresholds:
    b25: float = DEFAULT_B25
    b75: float = DEFAULT_B75

    def __post_init__(self):
        if not (0 < self.b25 <= self.b75):
            raise ValueError(f"need 0 < b25 <= b75, got {self.b25}, {self.b75}")

    def caps(self) -> tuple[float, float, float]:
        return (float(self.b25), float(self.b75), math.inf)

    def to_dict(self) -> dict:
        return {"b25": float(self.b25), "b75": float(self.b75), "version": THRESHOLDS_VERSION}


@dataclass(frozen=True)
class PolicyTarget:
    weights: tuple[float, float, float]
    feasible: frozenset[Action] = field(default_factory=frozenset)

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def _parse_row(obj, line: int) -> TraceRecord:
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", line)
    for key in ("id", "input", "correct", "cost"):
        if key not in obj:
            raise ParseError(f"missing key {key!r}", line)
    correct, cost = obj["correct"], obj["cost"]
    if not isinstance(correct, dict) or not isinstance(cost, dict):
        raise ParseError("'correct' and 'cost' must be objects", line)
    c_map, k_map = {}, {}
    for a in ACTIONS:
        key = POOL_KEYS[a]
        if key not in correct or key not in cost:
            raise MissingAction(f"action {key!r} missing", line)
        y = correct[key]
        if isinstance(y, bool):
            y = int(y)
        if y not in (0, 1) or isinstance(y, float):
            raise ParseError(f"correct[{key!r}] must be 0 or 1", line)
        c = cost[key]
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise ParseError(f"cost[{key!r}] must be a number", line)
        if c <= 0:
            raise NonPositiveCost(f"cost[{key!r}]={c}", line)
        if isinstance(c, float):
            if not c.is_integer():
                raise ParseError(f"cost[{key!r}] must be an integer token count", line)
            c = int(c)
        c_map[a], k_map[a] = y, c
    tier = obj.get("tier")
    depth = obj.get("depth", 1)
    if not isinstance(obj["id"], str) or not isinstance(obj["input"], str):
        raise ParseError("'id' and 'input' must be strings", line)
    return TraceRecord(
        instance_id=obj["id"],
        input_text=obj["input"],
        correct=c_map,
        cost=k_map,
        source=str(obj.get("source", "")),
        tier=None if tier is None else int(tier),
        depth=int(depth),
    )


def parse_pool_lines(lines: Iterable[str]) -> list[TraceRecord]:
    records = []
    for i, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", i) from None
        try:
            records.append(_parse_row(obj, i))
        except PoolError:
            raise
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), i) from None
    return records


def ingest_pool(path: str | PathLike) -> list[TraceRecord]:
    """Read and validate a JSONL pool file. Errors carry the 1-based line number."""
    with open(path, encoding="utf-8") as fh:
        return parse_pool_lines(fh)


def write_pool(records: Iterable[TraceRecord], path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json())
            fh.write("\n")


def save_thresholds(th: TierThresholds, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(th.to_dict(), fh)
        fh.write("\n")


def load_thresholds(path: str | PathLike) -> TierThresholds:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("version") != THRESHOLDS_VERSION:
        raise ValueError(f"unsupported thresholds version {obj.get('version')!r}")
    return TierThresholds(float(obj["b25"]), float(obj["b75"]))


# ---------------------------------------------------------------------------
# supervision targets
# ---------------------------------------------------------------------------


def required_cost(record: TraceRecord) -> int | None:
    """Cheapest cost among successful actions; None for all-fail records."""
    costs = [record.cost[a] for a in ACTIONS if record.correct[a]]
    return min(costs) if costs else None


def nearest_rank(sorted_values: Sequence[float], p: float) -> float:
    n = len(sorted_values)
    idx = max(1, math.ceil(p * n))
    return sorted_values[idx - 1]


def fit_thresholds(records: Iterable[TraceRecord]) -> TierThresholds:
    """Nearest-rank 25th/75th percentiles of required cost, all-fail rows excluded."""
    req = sorted(c for c in (required_cost(r) for r in records) if c is not None)
    if not req:
        raise EmptyPool("no record has a successful action")
    return TierThresholds(float(nearest_rank(req, 0.25)), float(nearest_rank(req, 0.75)))


def assign_tier(c_req: float, th: TierThresholds) -> int:
    if c_req <= th.b25:
        return 0
    if c_req <= th.b75:
        return 1
    return 2


def ordinal_targets(tier: int) -> tuple[int, int]:
    if tier not in (0, 1, 2):
        raise ValueError(f"tier must be 0, 1 or 2, got {tier}")
    return int(tier >= 1), int(tier >= 2)


def policy_soft_target(
    record: TraceRecord,
    tier: int,
    alpha_pol: float = DEFAULT_ALPHA_POL,
    caps: Sequence[float] = (DEFAULT_B25, DEFAULT_B75, math.inf),
) -> PolicyTarget:
    """Feasible-set soft target trading correctness against inverse cost."""
    cap = caps[tier]
    feasible = [a for a in ACTIONS if record.cost[a] <= cap]
    if not feasible:
        raise EmptyFeasible(f"no action of {record.instance_id!r} fits cap {cap} (tier {tier})")
    raw = {
        a: alpha_pol * record.correct[a] + (1.0 - alpha_pol) / record.cost[a] for a in feasible
    }
    total = sum(raw.values())
    if total > 0:
        weights = tuple(raw[a] / total if a in raw else 0.0 for a in ACTIONS)
    else:
        weights = tuple(1.0 / len(feasible) if a in raw else 0.0 for a in ACTIONS)
    return PolicyTarget(weights=weights, feasible=frozenset(feasible))


def tier_labels(records: Sequence[TraceRecord], th: TierThresholds) -> list[int | None]:
    """Tier per record, None for all-fail rows."""
    out = []
    for r in records:
        c = required_cost(r)
        out.append(None if c is None else assign_tier(c, th))
    return out


def generate_synthetic_pool(n: int, seed: int, profile=None) -> list[TraceRecord]:
    """Deterministic synthetic contrast pool; see :mod:`budgetgraph.synthetic`."""
    from .synthetic import generate_pool

    return generate_pool(n, seed, profile)
