from __future__ import annotations

import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from budgetgraph.backends import mock_backend
from budgetgraph.errors import DegenerateInput, EmptyTraces, IncompleteGrid, LengthMismatch
from budgetgraph.executor import RunTrace
from budgetgraph.graph import TokenUsage
from budgetgraph.metrics import (
    EvalRow,
    build_report,
    format_table,
    judge_answer,
    mean_regret,
    oracle_match_rate,
    regret,
    run_stats,
    spearman,
    utility,
)


def naive_ranks(xs):
    # average rank of each value: 1 + (# smaller) + (# equal - 1) / 2
    return [1 + sum(y < x for y in xs) + (sum(y == x for y in xs) - 1) / 2 for x in xs]


def naive_spearman(xs, ys):
    rx, ry = naive_ranks(xs), naive_ranks(ys)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


# --- judging ----------------------------------------------------------------


def test_exact_judging():
    assert judge_answer("exact", " Paris ", "paris").correct == 1
    assert judge_answer("exact", "Paris", "London").correct == 0
    assert judge_answer("exact", "New  York", "new york").correct == 1


def test_semantic_judging_and_trace():
    judge = mock_backend({"default": {"reply": '{"is_equivalent": true, "reasoning": "same"}',
                                      "usage": {"in": 30, "out": 9}}})
    trace = RunTrace("r")
    trace.add("n1", 1, "IO", "small", TokenUsage(10, 2), "Solved")
    verdict = judge_answer("semantic", "the Seine", "Seine River", judge, trace=trace)
    assert verdict.correct == 1
    assert judge.calls[0]["temperature"] == 0.0
    assert trace.events[-1].phase == "Judge"
    assert trace.totals == TokenUsage(10, 2)  # judge usage excluded from cost


def test_semantic_parse_failure_falls_back_to_exact():
    judge = mock_backend({"default": {"reply": "I think they match"}})
    v = judge_answer("semantic", "Paris", "paris", judge)
    assert v.correct == 1 and v.diagnostics["JudgeParseError"]
    v = judge_answer("semantic", "Paris", "Rome", judge)
    assert v.correct == 0


def test_judge_mode_errors():
    with pytest.raises(ValueError):
        judge_answer("fuzzy", "a", "b")
    with pytest.raises(ValueError):
        judge_answer("semantic", "a", "b")


# --- utility, regret, oracle match -----------------------------------------


def test_utility_and_regret_examples():
    assert utility(1, 1000, 1e-4) == pytest.approx(0.9, abs=1e-12)
    r = regret({"A": 0.9, "B": 0.95})
    assert r["A"] == pytest.approx(0.05, abs=1e-12) and r["B"] == 0.0
    rows = [EvalRow("q", "A", 1, 1000, 0.9), EvalRow("q", "B", 1, 500, 0.95)]
    assert oracle_match_rate(rows) == {"A": 0.0, "B": 1.0}


def test_ties_count_for_all():
    rows = [EvalRow.make("q", m, 1, 100) for m in ("A", "B")] + [EvalRow.make("q", "C", 0, 0)]
    assert oracle_match_rate(rows) == {"A": 1.0, "B": 1.0, "C": 0.0}


def test_incomplete_grid():
    rows = [EvalRow.make("q1", "A", 1, 10), EvalRow.make("q1", "B", 1, 10),
            EvalRow.make("q2", "A", 1, 10)]
    with pytest.raises(IncompleteGrid):
        mean_regret(rows)
    with pytest.raises(IncompleteGrid):
        oracle_match_rate([])
    # restricting to a complete subset is fine
    assert mean_regret(rows, ["A"]) == {"A": 0.0}


def test_random_grids_against_brute_force(rng):
    methods = ["a", "b", "c", "d"]
    for _ in range(50):
        nq = int(rng.integers(1, 30))
        beta = float(rng.choice([1e-4, 1e-3]))
        rows, table = [], {}
        for q in range(nq):
            for m in methods:
                c, cost = int(rng.integers(0, 2)), int(rng.choice([0, 100, 500, 2500]))
                rows.append(EvalRow.make(f"q{q}", m, c, cost, beta))
                table[(q, m)] = c - beta * cost
        reg = mean_regret(rows)
        match = oracle_match_rate(rows)
        for m in methods:
            exp_reg = sum(max(table[(q, k)] for k in methods) - table[(q, m)]
                          for q in range(nq)) / nq
            exp_match = sum(table[(q, m)] == max(table[(q, k)] for k in methods)
                            for q in range(nq)) / nq
            assert abs(reg[m] - exp_reg) <= 1e-12
            assert match[m] == exp_match
        assert sum(match.values()) >= 1.0


def test_regret_invariants(rng):
    for _ in range(100):
        utils = {m: float(u) for m, u in zip("abc", rng.normal(size=3))}
        r = regret(utils)
        assert min(r.values()) == 0.0 and all(v >= 0 for v in r.values())


@given(st.integers(0, 1), st.integers(0, 10_000), st.integers(1, 10_000))
def test_utility_decreasing_in_cost(c, cost, extra):
    assert utility(c, cost + extra, 1e-4) < utility(c, cost, 1e-4)


# --- spearman ---------------------------------------------------------------


def test_spearman_examples():
    assert spearman([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-12)


def test_spearman_errors():
    with pytest.raises(LengthMismatch):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        spearman([1], [1])
    with pytest.warns(DegenerateInput):
        assert spearman([1, 1, 1], [1, 2, 3]) == 0.0


def test_spearman_matches_naive_with_ties(rng):
    for _ in range(50):
        n = int(rng.integers(2, 25))
        xs = rng.integers(0, 6, n).tolist()
        ys = rng.integers(0, 6, n).tolist()
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            continue
        assert spearman(xs, ys) == pytest.approx(naive_spearman(xs, ys), abs=1e-12)


def test_spearman_monotone_invariance(rng):
    xs = rng.normal(size=20)
    ys = rng.normal(size=20)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert spearman(xs, ys) == spearman(np.exp(xs), ys ** 3)


# --- run statistics and reports --------------------------------------------


def _trace(node_depths: list[tuple[str, int]]) -> RunTrace:
    tr = RunTrace("r")
    tr.add("root", 0, "Decompose", "large", TokenUsage(100, 50), "Expanded")
    for nid, d in node_depths:
        tr.add(nid, d, "IO", "small", TokenUsage(10, 5), "Solved")
    tr.add("root", 0, "Synthesis", "large", TokenUsage(20, 10), "Done")
    tr.add("root", 0, "Judge", "large", TokenUsage(99, 9), "Judged")
    return tr


def test_run_stats_examples():
    s = run_stats([_trace([(f"n{i}", 1) for i in range(1, 6)])])
    assert s.mean_node_count == 5
    assert s.mean_total_tokens == 150 + 5 * 15 + 30
    assert s.action_histogram == {"Decompose": 1, "IO": 5, "Synthesis": 1}
    s = run_stats([_trace([("n1", 1)]), _trace([("n1", 1), ("n2", 2)])])
    assert s.mean_max_depth == 1.5
    with pytest.raises(EmptyTraces):
        run_stats([])


def test_report_stable_and_complete():
    rows = [EvalRow.make(f"q{i}", m, (i + j) % 2, 100 * j, 1e-4)
            for i in range(4) for j, m in enumerate(["large", "routed", "small"])]
    a = json.dumps(build_report(rows, 1e-4))
    b = json.dumps(build_report(list(reversed(rows)), 1e-4))
    assert a == b
    rep = json.loads(a)
    assert rep["beta"] == 1e-4 and rep["n_questions"] == 4
    assert [m["name"] for m in rep["methods"]] == ["large", "routed", "small"]
    table = format_table(rep)
    assert table.splitlines()[0] == "beta = 0.0001, questions = 4"
    assert len(table.splitlines()) == 6


def test_report_counts_flagged_rows():
    rows = [EvalRow.make("q", "a", 1, 1, JudgeParseError=True), EvalRow.make("q", "b", 1, 1)]
    rep = build_report(rows, 1e-4)
    assert rep["methods"][0]["flagged_rows"] == 1 and "flagged_rows" not in rep["methods"][1]
