"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are written
to the terminal when the module finishes. Each criterion is also a normal
test, so a failure shows its assertion as usual.
"""

from __future__ import annotations

import copy
import json
import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from helpers import (
    central_diff,
    make_record,
    select_oracle,
    separable_fixture,
)

from budgetgraph import prompts
from budgetgraph.backends import BackendSet, mock_backend
from budgetgraph.executor import RunConfig, Subtask, run, run_with_graph
from budgetgraph.features import FEATURE_DIM
from budgetgraph.graph import UNSOLVED_MARKER, Action, Status, Tier, render_packet
from budgetgraph.metrics import (
    EvalRow,
    mean_regret,
    oracle_match_rate,
    regret,
    spearman,
    utility,
)
from budgetgraph.pool import (
    TierThresholds,
    assign_tier,
    fit_thresholds,
    ordinal_targets,
    write_pool,
)
from budgetgraph.router import (
    CostEstimator,
    FixedRouter,
    PolicyModel,
    RandomRouter,
    RouterModel,
    TrainConfig,
    decode_tier,
    load_router,
    masked_choice,
    ordinal_forward,
    ordinal_loss,
    policy_forward,
    policy_input,
    policy_loss,
    save_router,
    sigmoid,
    success_forward,
    success_loss,
    train_ordinal,
    train_success,
)
from budgetgraph.scheduler import Limits
from budgetgraph.study import StudyConfig, compare, sweep
from budgetgraph.synthetic import SyntheticWorld, generate_pool, make_questions
from budgetgraph.training import SYNTHETIC_TRAIN, train_router

_LINES: list[str] = []


@contextmanager
def criterion(n: int, title: str):
    detail: dict = {}
    start = time.perf_counter()
    try:
        yield detail
    except BaseException:
        _emit(n, title, False, detail, time.perf_counter() - start)
        raise
    _emit(n, title, True, detail, time.perf_counter() - start)


def _emit(n, title, ok, detail, seconds):
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = f"{'PASS' if ok else 'FAIL'} [{n:>2}] {title} ({seconds:.1f}s{'; ' + extra if extra else ''})"
    _LINES.append((n, line))
    print(line)


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    write = reporter.write_line if reporter else print
    write("")
    write("acceptance criteria:")
    for _, line in sorted(_LINES):
        write(line)


def _rel(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


# ---------------------------------------------------------------------------
# 1. budget adherence
# ---------------------------------------------------------------------------


def _usage(rng, lo_in, hi_in, lo_out, hi_out):
    return {"in": int(rng.integers(lo_in, hi_in)), "out": int(rng.integers(lo_out, hi_out))}


def _plan(rng, n, root):
    return json.dumps({
        "root_summary": "root" if root else "",
        "branch_summary": "branch",
        "subtasks": [{"content": f"step {i}", "evidence": f"e{i}"} for i in range(n)],
    })


def _random_scenario(rng) -> dict:
    branch = _plan(rng, int(rng.integers(1, 6)), False) if rng.random() < 0.8 else "no plan"
    return {"rules": [
        {"match": "Root Flag: true", "reply": _plan(rng, int(rng.integers(1, 6)), True),
         "usage": _usage(rng, 50, 800, 20, 600)},
        {"match": "Root Flag: false", "reply": branch, "usage": _usage(rng, 50, 800, 20, 600)},
        {"match": "Output ONLY", "reply": "a", "usage": _usage(rng, 20, 600, 1, 300)},
        {"match": "step by step", "reply": "<answer>b</answer>",
         "usage": _usage(rng, 20, 1500, 1, 3000)},
        {"match": "sub-task as part", "reply": "c", "usage": _usage(rng, 20, 1500, 1, 5000)},
        {"match": "decomposition hints", "reply": "d", "usage": _usage(rng, 20, 1500, 1, 2000)},
        {"match": "Synthesize", "reply": "Answer: e", "usage": _usage(rng, 20, 400, 1, 4000)},
    ]}


def _decompose_router(rng) -> RouterModel:
    r = RouterModel(thresholds=TierThresholds(float(rng.integers(50, 300)),
                                              float(rng.integers(300, 3000))))
    r.ordinal.b = rng.normal(0, 3, 2)
    r.success.b = rng.normal(0, 3, 3)
    pol = PolicyModel.zeros()
    W, _ = pol.layers[-1]
    pol.layers[-1] = (W, rng.normal(0, 3, 3))
    r.policy = pol
    r.estimator = CostEstimator(priors=dict(zip(Action, rng.integers(1, 5000, 3).tolist())))
    return r


def test_1_budget_adherence():
    with criterion(1, "budget adherence over 1000 random mock scenarios") as d:
        rng = np.random.default_rng(2024)
        violations, start = 0, time.perf_counter()
        for i in range(1000):
            scn = _random_scenario(rng)
            be = BackendSet(*(mock_backend(scn, seed=i, tier=t) for t in Tier))
            kind = int(rng.integers(0, 5))
            router = (FixedRouter(list(Action)[kind]) if kind < 3
                      else RandomRouter(i) if kind == 3 else _decompose_router(rng))
            cfg = RunConfig(b_total=float(rng.integers(1000, 30000)),
                            alpha_syn=float(rng.uniform(0.05, 0.3)),
                            b_min=float(rng.integers(0, 513)),
                            limits=Limits(max_depth=int(rng.integers(1, 4))))
            _, trace, _, state = run_with_graph(f"question {i}?", cfg, be, router)
            syn = [e for e in trace.events if e.phase == "Synthesis"]
            ok = (trace.totals.total() <= cfg.b_total and len(syn) == 1
                  and trace.events[-1] is syn[0]
                  and syn[0].diagnostics["max_tokens"] == int(state.b_syn))
            violations += not ok
        elapsed = time.perf_counter() - start
        d.update(violations=violations, seconds=round(elapsed, 1))
        assert violations == 0
        assert elapsed <= 60


# ---------------------------------------------------------------------------
# 2. constrained selection
# ---------------------------------------------------------------------------


def test_2_selection_oracle():
    with criterion(2, "select_action agrees with brute-force oracle on 10000 triples") as d:
        rng = np.random.default_rng(7)
        agree = 0
        for i in range(10_000):
            dist = rng.dirichlet(np.ones(3))
            if i % 4 == 0:
                dist = np.round(dist * 4) / 4  # exact ties in probability mass
            est = rng.choice([40.0, 60.0, 100.0, 700.0, 2500.0], 3)
            budget = float(rng.choice([30.0, 60.0, 100.0, 700.0, 2500.0, 1e9]))
            a, forced = masked_choice(dist, est, budget)
            agree += (a.index, forced) == select_oracle(dist, est, budget)
        d["agreement"] = f"{agree}/10000"
        assert agree == 10_000


# ---------------------------------------------------------------------------
# 3. label construction
# ---------------------------------------------------------------------------


def test_3_label_oracle():
    with criterion(3, "threshold, tier and ordinal labels match sort-and-index oracle") as d:
        rng = np.random.default_rng(11)
        mismatches = 0
        for _ in range(100):
            n = int(rng.integers(1, 1001))
            recs = [make_record(rng.integers(0, 2, 3).tolist(), rng.integers(1, 5000, 3).tolist(),
                                rid=f"r{i}") for i in range(n)]
            recs[0] = make_record((1, 1, 1), recs[0].cost.values())  # at least one solvable row
            req = []
            for r in recs:
                ok = [c for c, y in zip(r.cost.values(), r.correct.values()) if y]
                req.append(min(ok) if ok else None)
            ordered = sorted(c for c in req if c is not None)
            b25 = ordered[max(1, math.ceil(0.25 * len(ordered))) - 1]
            b75 = ordered[max(1, math.ceil(0.75 * len(ordered))) - 1]
            th = fit_thresholds(recs)
            mismatches += (th.b25, th.b75) != (b25, b75)
            for c in req:
                if c is None:
                    continue
                tier = 0 if c <= b25 else (1 if c <= b75 else 2)
                mismatches += assign_tier(c, th) != tier
                mismatches += ordinal_targets(tier) != (int(tier >= 1), int(tier >= 2))
        d["mismatches"] = mismatches
        assert mismatches == 0


# ---------------------------------------------------------------------------
# 4. gradient checks
# ---------------------------------------------------------------------------


def test_4_gradient_checks():
    with criterion(4, "analytic gradients match central differences (100 instances each)") as d:
        rng = np.random.default_rng(3)
        worst = {"success": 0.0, "ordinal": 0.0, "policy": 0.0}
        for _ in range(100):
            f0, y = rng.normal(0, 2, 3), rng.integers(0, 2, 3)
            lam, m = float(rng.uniform(0, 2)), float(rng.uniform(0.2, 2))
            g = success_loss(f0, y, lam, m)[1]
            fd = central_diff(lambda f: success_loss(f, y, lam, m)[0], f0)
            worst["success"] = max(worst["success"], _rel(g, fd))

            g0, tier = rng.normal(0, 2, 2), int(rng.integers(0, 3))
            g = ordinal_loss(g0, tier)[1]
            fd = central_diff(lambda x: ordinal_loss(x, tier)[0], g0)
            worst["ordinal"] = max(worst["ordinal"], _rel(g, fd))

            model = PolicyModel.init(seed=int(rng.integers(1 << 30)))
            z = policy_input(rng.normal(0, 2, 3), int(rng.integers(0, 3)))
            target = rng.dirichlet(np.ones(3))
            _, grads = policy_loss(model, z, target)
            for li, pair in enumerate(grads):
                for which, g in enumerate(pair):
                    def loss_at(p, li=li, which=which):
                        layers = [list(x) for x in model.layers]
                        layers[li][which] = p
                        return policy_loss(PolicyModel([tuple(x) for x in layers]), z, target)[0]
                    fd = central_diff(loss_at, model.layers[li][which])
                    worst["policy"] = max(worst["policy"], _rel(g, fd))
        d.update({k: f"{v:.1e}" for k, v in worst.items()})
        assert max(worst.values()) <= 1e-4


# ---------------------------------------------------------------------------
# 5. learnability
# ---------------------------------------------------------------------------


def _auc(scores, labels) -> float:
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (len(pos) * len(neg)))


def test_5_learnability():
    with criterion(5, "separable fixture: ordinal decode >= 0.95, success heads >= 0.90") as d:
        start = time.perf_counter()
        X, tiers, Y = separable_fixture(2500, 7)
        fit = TrainConfig(epochs=300, lr=0.05, weight_decay=1e-4)
        s, _ = train_success(X[:2000], Y[:2000], fit)
        o, _ = train_ordinal(X[:2000], tiers[:2000], fit)
        Xh, th, Yh = X[2000:], tiers[2000:], Y[2000:]
        F = Xh @ s.W.T + s.b
        head_acc = ((F > 0) == Yh).mean(axis=0)
        aucs = [_auc(F[:, a], Yh[:, a]) for a in range(3)]
        q = sigmoid(Xh @ o.W.T + o.b)
        decoded = np.array([decode_tier(a, b, *o.tau) for a, b in q])
        decode_acc = float((decoded == th).mean())
        d.update(decode=round(decode_acc, 3), heads=[round(float(a), 3) for a in head_acc],
                 auc=[round(a, 3) for a in aucs])
        assert decode_acc >= 0.95
        assert np.all(head_acc >= 0.90)
        assert time.perf_counter() - start <= 120


# ---------------------------------------------------------------------------
# 6. end-to-end routing benefit
# ---------------------------------------------------------------------------


def test_6_routing_benefit():
    with criterion(6, "routed utility beats uniform Small and Large; cost <= 50% of Large") as d:
        start = time.perf_counter()
        res = compare(StudyConfig(seed=0, n_questions=200), ("routed", "small", "large"))
        stats = {}
        for m in ("routed", "small", "large"):
            rows = [r for r in res.rows if r.method == m]
            stats[m] = (sum(r.utility for r in rows) / len(rows),
                        sum(r.cost for r in rows) / len(rows),
                        sum(r.correct for r in rows) / len(rows))
        d.update({f"{m}_util": round(v[0], 4) for m, v in stats.items()})
        d["cost_ratio"] = round(stats["routed"][1] / stats["large"][1], 3)
        assert stats["routed"][0] >= stats["large"][0] + 0.02
        assert stats["routed"][0] >= stats["small"][0] + 0.02
        assert stats["routed"][1] <= 0.5 * stats["large"][1]
        assert time.perf_counter() - start <= 300


# ---------------------------------------------------------------------------
# 7. fallback
# ---------------------------------------------------------------------------


def test_7_fallback():
    with criterion(7, "plan estimate over remaining budget triggers one SolveWithPlan") as d:
        plan = lambda n, root: json.dumps({  # noqa: E731
            "root_summary": "r" if root else "", "branch_summary": "b",
            "subtasks": [{"content": f"part {i}", "evidence": ""} for i in range(n)]})
        scn = {"rules": [
            {"match": "Root Flag: true", "reply": plan(1, True)},
            {"match": "Root Flag: false", "reply": plan(3, False)},
            {"match": "decomposition hints", "reply": "from hints"},
            {"match": "Synthesize", "reply": "Answer: from hints"},
        ]}
        be = BackendSet(*(mock_backend(scn, tier=t) for t in Tier))
        router = RouterModel(thresholds=TierThresholds(100, 1000))
        router.ordinal.b = np.array([6.0, 6.0])
        pol = PolicyModel.zeros()
        pol.layers[-1] = (pol.layers[-1][0], np.array([0.0, 0.0, 6.0]))
        router.policy = pol
        router.estimator = CostEstimator(priors={a: 8000.0 for a in Action})
        _, trace, graph, _ = run_with_graph("q", RunConfig(b_total=20000), be, router)
        phases = [e.phase for e in trace.events]
        n1 = graph.node("n1")
        d.update(phases="/".join(phases))
        assert phases.count("SolveWithPlan") == 1
        assert all(n.depth <= 1 for n in graph.nodes.values())
        assert n1.status is Status.SOLVED


# ---------------------------------------------------------------------------
# 8. budget sweep
# ---------------------------------------------------------------------------


def test_8_budget_sweep():
    with criterion(8, "sweep over 1k..20k: spearman >= 0.8 over 5 seeds, spend within cap") as d:
        budgets = [1000, 2000, 5000, 10_000, 20_000]
        res = sweep(budgets, [0, 1, 2, 3, 4], StudyConfig(n_questions=50))
        d.update(rho=round(res.rho, 3),
                 accuracy=[round(p.accuracy, 3) for p in res.points])
        assert res.rho >= 0.8
        for p in res.points:
            assert p.mean_cost <= p.b_total
            assert res.max_cost[p.b_total] <= p.b_total


# ---------------------------------------------------------------------------
# 9. metric oracles
# ---------------------------------------------------------------------------


def _naive_spearman(xs, ys):
    def ranks(v):
        return [1 + sum(u < x for u in v) + (sum(u == x for u in v) - 1) / 2 for x in v]
    rx, ry = ranks(xs), ranks(ys)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    return num / math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))


def test_9_metric_oracles():
    with criterion(9, "regret, oracle match and spearman match worked and brute-force values") as d:
        assert abs(utility(1, 1000, 1e-4) - 0.9) <= 1e-12
        r = regret({"A": 0.9, "B": 0.95})
        assert abs(r["A"] - 0.05) <= 1e-12 and r["B"] == 0
        tied = [EvalRow.make("q", m, 1, 10) for m in ("A", "B")]
        assert oracle_match_rate(tied) == {"A": 1.0, "B": 1.0}
        assert spearman([1, 2, 3], [1, 2, 3]) == 1.0
        assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
        assert abs(spearman([1, 2, 3, 4], [2, 1, 4, 3]) - 0.6) <= 1e-12
        rng = np.random.default_rng(5)
        methods = ["a", "b", "c"]
        checked = 0
        for _ in range(50):
            nq = int(rng.integers(1, 40))
            rows, u = [], {}
            for q in range(nq):
                for m in methods:
                    c, cost = int(rng.integers(0, 2)), int(rng.choice([0, 60, 700, 2500]))
                    rows.append(EvalRow.make(f"q{q}", m, c, cost, 1e-4))
                    u[q, m] = c - 1e-4 * cost
            reg, match = mean_regret(rows), oracle_match_rate(rows)
            for m in methods:
                best = [max(u[q, k] for k in methods) for q in range(nq)]
                assert abs(reg[m] - sum(best[q] - u[q, m] for q in range(nq)) / nq) <= 1e-12
                assert match[m] == sum(u[q, m] == best[q] for q in range(nq)) / nq
            xs, ys = rng.integers(0, 8, 12).tolist(), rng.integers(0, 8, 12).tolist()
            if len(set(xs)) > 1 and len(set(ys)) > 1:
                assert spearman(xs, ys) == pytest.approx(_naive_spearman(xs, ys), abs=1e-12)
            checked += 1
        d["grids"] = checked


# ---------------------------------------------------------------------------
# 10. determinism and round trips
# ---------------------------------------------------------------------------


def test_10_determinism(tmp_path):
    with criterion(10, "identical seeds give identical traces, pools, routers; save/load exact") as d:
        pool_a, pool_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_pool(generate_pool(500, 9), pool_a)
        write_pool(generate_pool(500, 9), pool_b)
        assert pool_a.read_bytes() == pool_b.read_bytes()

        r1, _ = train_router(generate_pool(500, 9), SYNTHETIC_TRAIN)
        r2, _ = train_router(generate_pool(500, 9), SYNTHETIC_TRAIN)
        save_router(r1, tmp_path / "r1.json")
        save_router(r2, tmp_path / "r2.json")
        assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()

        qs = make_questions(20, 4)
        traces = []
        for _ in range(2):
            world = SyntheticWorld(qs, seed=4)
            traces.append("".join(run(q.text, RunConfig(), world.backends(),
                                      copy.deepcopy(r1), q.qid)[1].to_jsonl() for q in qs))
        assert traces[0] == traces[1]

        back = load_router(tmp_path / "r1.json")
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.normal(size=FEATURE_DIM)
            assert np.array_equal(success_forward(r1.success, x)[1],
                                  success_forward(back.success, x)[1])
            assert np.array_equal(ordinal_forward(r1.ordinal, x), ordinal_forward(back.ordinal, x))
            f, t = rng.normal(size=3), int(rng.integers(0, 3))
            assert np.array_equal(policy_forward(r1.policy, f, t), policy_forward(back.policy, f, t))
            n_in = float(rng.integers(0, 500))
            assert r1.estimator.estimates(n_in).tolist() == back.estimator.estimates(n_in).tolist()
        d["inputs"] = 100


# ---------------------------------------------------------------------------
# 11. prompt fidelity
# ---------------------------------------------------------------------------


def test_11_prompt_fidelity():
    with criterion(11, "rendered prompts byte-match transcribed golden files") as d:
        golden = Path(__file__).parent / "golden"
        q = "Which river flows through the capital of the country that hosted the 1998 World Cup?"
        summary = "Find the host, then its capital, then the river."
        ev = "The 1998 World Cup was held in France."
        cases = {
            "decompose_root": prompts.decompose(q, True),
            "subtask": prompts.subtask(render_packet(q, summary, ev, ["n1: France"],
                                                     "Name the capital of France.")),
            "fallback": prompts.fallback(q, summary, [Subtask("Identify the host country.", ev),
                                                      Subtask("Name the river through its capital.")]),
            "synthesis": prompts.synthesis(q, ["n1: France", f"n2: {UNSOLVED_MARKER}"]),
            "judge": prompts.judge("the Seine", "Seine River"),
        }
        matched = 0
        for name, (system, user) in cases.items():
            assert system.encode() == (golden / f"{name}.system.txt").read_bytes(), name
            assert user.encode() == (golden / f"{name}.user.txt").read_bytes(), name
            matched += 1
        d["templates"] = matched
