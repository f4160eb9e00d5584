"""Decision-quality metrics, answer judging, run statistics and reports."""

from __future__ import annotations

import json
import math
import re
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels, prompts
from .errors import DegenerateInput, EmptyTraces, IncompleteGrid, LengthMismatch

DEFAULT_BETA = 1e-4
_NON_NODE_PHASES = {"Synthesis", "Judge"}


def normalize_answer(text: str) -> str:
    return " ".join(text.split()).lower()


# ---------------------------------------------------------------------------
# judging
# ---------------------------------------------------------------------------


@dataclass
class Judgement:
    correct: int
    diagnostics: dict = field(default_factory=dict)
    usage: object | None = None  # TokenUsage of the judge call, semantic mode only

    def __int__(self) -> int:
        return self.correct


_JSON_OBJ_RE = re.compile(r"\{.*\}", re.S)


def _parse_verdict(text: str) -> bool | None:
    m = _JSON_OBJ_RE.search(text)
    if m is None:
        return None
    try:
        obj = json.loads(m.group(0))
    except json.JSONDecodeError:
        return None
    verdict = obj.get("is_equivalent") if isinstance(obj, dict) else None
    return verdict if isinstance(verdict, bool) else None


def judge_answer(mode: str, prediction: str, reference: str, judge_backend=None,
                 trace=None, seed: int | None = 0) -> Judgement:
    """Score ``prediction`` against ``reference``.

    ``exact`` compares case- and whitespace-normalised strings. ``semantic``
    asks ``judge_backend`` at temperature 0 and falls back to exact matching
    (flagged ``JudgeParseError``) when the verdict cannot be parsed. When a
    ``trace`` is given the judge call is appended as a Judge event.
    """
    exact = int(normalize_answer(prediction) == normalize_answer(reference))
    if mode == "exact":
        return Judgement(exact)
    if mode != "semantic":
        raise ValueError(f"unknown judge mode {mode!r}")
    if judge_backend is None:
        raise ValueError("semantic judging needs a judge backend")
    system, user = prompts.judge(prediction, reference)
    gen = judge_backend.generate(user, system, 256, 0.0, seed)
    verdict = _parse_verdict(gen.text)
    diag = dict(gen.diagnostics)
    if verdict is None:
        diag["JudgeParseError"] = True
        correct = exact
    else:
        correct = int(verdict)
    if trace is not None:
        trace.add("root", 0, "Judge", judge_backend.tier, gen.usage, "Judged",
                  {**diag, "correct": correct})
    return Judgement(correct, diag, gen.usage)


# ---------------------------------------------------------------------------
# utility, regret, oracle match
# ---------------------------------------------------------------------------


def utility(correct: float, cost: float, beta: float = DEFAULT_BETA) -> float:
    return correct - beta * cost


@dataclass
class EvalRow:
    question_id: str
    method: str
    correct: int
    cost: int
    utility: float
    flags: dict = field(default_factory=dict)

    @classmethod
    def make(cls, question_id: str, method: str, correct: int, cost: int,
             beta: float = DEFAULT_BETA, **flags) -> "EvalRow":
        return cls(question_id, method, int(correct), int(cost), utility(correct, cost, beta),
                   flags)


def regret(utilities: dict[str, float]) -> dict[str, float]:
    """Gap from each method's utility to the best utility on one question."""
    best = max(utilities.values())
    return {m: best - u for m, u in utilities.items()}


def _grid(rows: Iterable[EvalRow], methods: Sequence[str] | None = None):
    grid: dict[str, dict[str, EvalRow]] = {}
    for r in rows:
        grid.setdefault(r.question_id, {})[r.method] = r
    if not grid:
        raise IncompleteGrid("no evaluation rows")
    methods = sorted(methods or {m for per in grid.values() for m in per})
    for qid, per in grid.items():
        missing = [m for m in methods if m not in per]
        if missing:
            raise IncompleteGrid(f"question {qid!r} has no row for {missing}")
    return grid, methods


def mean_regret(rows: Iterable[EvalRow], methods: Sequence[str] | None = None) -> dict[str, float]:
    grid, methods = _grid(rows, methods)
    totals = {m: 0.0 for m in methods}
    for qid in sorted(grid):
        r = regret({m: grid[qid][m].utility for m in methods})
        for m in methods:
            totals[m] += r[m]
    return {m: totals[m] / len(grid) for m in methods}


def oracle_match_rate(rows: Iterable[EvalRow],
                      methods: Sequence[str] | None = None) -> dict[str, float]:
    """Share of questions on which each method attains the best utility; ties count for all."""
    grid, methods = _grid(rows, methods)
    hits = {m: 0 for m in methods}
    for qid in sorted(grid):
        utils = {m: grid[qid][m].utility for m in methods}
        best = max(utils.values())
        for m in methods:
            hits[m] += utils[m] == best
    return {m: hits[m] / len(grid) for m in methods}


# ---------------------------------------------------------------------------
# rank correlation
# ---------------------------------------------------------------------------


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman correlation with average ranks for ties.

    A constant input has no ranking; the result is 0 and a
    :class:`DegenerateInput` warning is emitted.
    """
    if len(xs) != len(ys):
        raise LengthMismatch(f"lengths differ: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise LengthMismatch("need at least two points")
    rx = _kernels.average_ranks(np.asarray(xs, dtype=np.float64))
    ry = _kernels.average_ranks(np.asarray(ys, dtype=np.float64))
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        warnings.warn("spearman on a constant input is undefined; returning 0",
                      DegenerateInput, stacklevel=2)
        return 0.0
    return float(dx @ dy) / math.sqrt(sxx * syy)


# ---------------------------------------------------------------------------
# run statistics
# ---------------------------------------------------------------------------


@dataclass
class RunStats:
    n_runs: int
    mean_node_count: float
    mean_max_depth: float
    mean_total_tokens: float
    action_histogram: dict[str, int]

    def to_dict(self) -> dict:
        return asdict(self)


def run_stats(traces: Sequence) -> RunStats:
    """Aggregate node counts, depth, tokens and phase counts over runs.

    Node counts cover distinct non-root nodes; the root plan and the synthesis
    call are counted in tokens only.
    """
    traces = list(traces)
    if not traces:
        raise EmptyTraces("no traces to summarise")
    nodes, depths, tokens = [], [], []
    hist: Counter = Counter()
    for tr in traces:
        ids = set()
        max_depth = 0
        for ev in tr.events:
            if ev.phase == "Judge":
                continue
            hist[ev.phase] += 1
            if ev.node_id != "root" and ev.phase not in _NON_NODE_PHASES:
                ids.add(ev.node_id)
                max_depth = max(max_depth, ev.depth)
        nodes.append(len(ids))
        depths.append(max_depth)
        tokens.append(tr.totals.total())
    n = len(traces)
    return RunStats(n, sum(nodes) / n, sum(depths) / n, sum(tokens) / n,
                    dict(sorted(hist.items())))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class SweepPoint:
    b_total: float
    accuracy: float
    mean_cost: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def build_report(rows: Sequence[EvalRow], beta: float,
                 stats: dict[str, RunStats] | None = None,
                 methods: Sequence[str] | None = None) -> dict:
    """JSON-ready report over a complete question x method grid."""
    grid, methods = _grid(rows, methods)
    regrets = mean_regret(rows, methods)
    matches = oracle_match_rate(rows, methods)
    qids = sorted(grid)
    out = []
    for m in methods:
        per = [grid[q][m] for q in qids]
        entry = {
            "name": m,
            "accuracy": sum(r.correct for r in per) / len(per),
            "mean_cost": sum(r.cost for r in per) / len(per),
            "mean_utility": sum(r.utility for r in per) / len(per),
            "mean_regret": regrets[m],
            "oracle_match_rate": matches[m],
        }
        flagged = sum(1 for r in per if r.flags)
        if flagged:
            entry["flagged_rows"] = flagged
        if stats and m in stats:
            entry["node_stats"] = stats[m].to_dict()
        out.append(entry)
    return {"beta": beta, "methods": out, "n_questions": len(qids)}


def format_table(report: dict) -> str:
    header = f"{'method':<16}{'acc':>8}{'cost':>11}{'utility':>10}{'regret':>10}{'oracle':>9}"
    lines = [f"beta = {report['beta']:g}, questions = {report['n_questions']}", header,
             "-" * len(header)]
    for m in report["methods"]:
        lines.append(
            f"{m['name']:<16}{m['accuracy']:>8.3f}{m['mean_cost']:>11.1f}"
            f"{m['mean_utility']:>10.4f}{m['mean_regret']:>10.4f}{m['oracle_match_rate']:>9.3f}"
        )
    return "\n".join(lines) + "\n"


def format_sweep(points: Sequence[SweepPoint], rho: float | None = None) -> str:
    lines = [f"{'b_total':>10}{'accuracy':>10}{'mean_cost':>12}{'n':>6}"]
    for p in points:
        lines.append(f"{p.b_total:>10.0f}{p.accuracy:>10.3f}{p.mean_cost:>12.1f}{p.n:>6d}")
    if rho is not None:
        lines.append(f"spearman(budget, accuracy) = {rho:.3f}")
    return "\n".join(lines) + "\n"
