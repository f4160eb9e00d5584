"""Controlled studies on the synthetic world: method comparison and budget sweeps."""

from __future__ import annotations

import copy
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Sequence

from .executor import RunConfig, RunTrace, run
from .graph import Action
from .metrics import DEFAULT_BETA, EvalRow, SweepPoint, judge_answer, spearman
from .router import FixedRouter, RandomRouter, RouterModel
from .synthetic import (
    SyntheticProfile,
    SyntheticQuestion,
    SyntheticWorld,
    generate_pool,
    make_questions,
)
from .training import SYNTHETIC_TRAIN, RouterTrainConfig, train_router

log = logging.getLogger(__name__)

METHODS = ("routed", "small", "medium", "large", "random")
_UNIFORM = {"small": Action.IO, "medium": Action.COT, "large": Action.DECOMPOSE}


@dataclass
class StudyConfig:
    seed: int = 0
    pool_size: int = 3000
    n_questions: int = 200
    profile: SyntheticProfile = field(default_factory=SyntheticProfile)
    train: RouterTrainConfig = SYNTHETIC_TRAIN
    run: RunConfig = field(default_factory=RunConfig)
    beta: float = DEFAULT_BETA


def router_for(method: str, trained: RouterModel | None, seed: int = 0):
    """A fresh router for ``method``; the trained router is copied so runs start alike."""
    if method == "routed":
        if trained is None:
            raise ValueError("method 'routed' needs a trained router")
        return copy.deepcopy(trained)
    if method in _UNIFORM:
        return FixedRouter(_UNIFORM[method])
    if method == "random":
        return RandomRouter(seed)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def evaluate_method(method: str, router, questions: Sequence[SyntheticQuestion],
                    world: SyntheticWorld, run_cfg: RunConfig, beta: float = DEFAULT_BETA):
    """Run every question once under one router. Returns ``(rows, traces)``."""
    backends = world.backends()
    rows, traces = [], []
    for q in questions:
        answer, trace = run(q.text, run_cfg, backends, router, f"{method}:{q.qid}")
        trace.meta.update(question_id=q.qid, method=method)
        correct = judge_answer("exact", answer, q.reference).correct
        rows.append(EvalRow.make(q.qid, method, correct, trace.totals.total(), beta))
        traces.append(trace)
    return rows, traces


@dataclass
class Comparison:
    rows: list[EvalRow]
    traces: dict[str, list[RunTrace]]
    router: RouterModel | None


def compare(cfg: StudyConfig, methods: Sequence[str] = ("routed", "small", "large"),
            trained: RouterModel | None = None) -> Comparison:
    """Train on a synthetic pool (unless given a router) and evaluate ``methods``."""
    if trained is None and "routed" in methods:
        pool = generate_pool(cfg.pool_size, cfg.seed, cfg.profile)
        trained, _ = train_router(pool, cfg.train)
    questions = make_questions(cfg.n_questions, cfg.seed + 10_000, cfg.profile)
    rows, traces = [], {}
    for m in methods:
        world = SyntheticWorld(questions, cfg.profile, seed=cfg.seed)
        r, t = evaluate_method(m, router_for(m, trained, cfg.seed), questions, world,
                               cfg.run, cfg.beta)
        rows += r
        traces[m] = t
    return Comparison(rows, traces, trained)


@dataclass
class SweepResult:
    points: list[SweepPoint]
    per_seed: dict[int, list[SweepPoint]]
    rho: float
    max_cost: dict[float, int]

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "per_seed": {str(s): [p.to_dict() for p in pts] for s, pts in self.per_seed.items()},
            "spearman_budget_accuracy": self.rho,
            "max_cost": {str(int(b)): c for b, c in self.max_cost.items()},
        }


def sweep(budgets: Sequence[float], seeds: Sequence[int], cfg: StudyConfig,
          method: str = "routed") -> SweepResult:
    """Mean accuracy and spend of ``method`` at each total budget, pooled over seeds."""
    per_seed: dict[int, list[SweepPoint]] = {}
    acc = {b: 0.0 for b in budgets}
    cost = {b: 0.0 for b in budgets}
    n = {b: 0 for b in budgets}
    max_cost = {b: 0 for b in budgets}
    for seed in seeds:
        scfg = dataclasses.replace(cfg, seed=seed)
        trained = None
        if method == "routed":
            trained, _ = train_router(generate_pool(scfg.pool_size, seed, scfg.profile),
                                      scfg.train)
        questions = make_questions(scfg.n_questions, seed + 10_000, scfg.profile)
        pts = []
        for b in budgets:
            run_cfg = copy.deepcopy(scfg.run)
            run_cfg.b_total = b
            world = SyntheticWorld(questions, scfg.profile, seed=seed)
            rows, _ = evaluate_method(method, router_for(method, trained, seed), questions,
                                      world, run_cfg, scfg.beta)
            k = len(rows)
            a = sum(r.correct for r in rows)
            c = sum(r.cost for r in rows)
            pts.append(SweepPoint(b, a / k, c / k, k))
            acc[b] += a
            cost[b] += c
            n[b] += k
            max_cost[b] = max(max_cost[b], max(r.cost for r in rows))
            log.info("seed %d budget %s: accuracy %.3f", seed, b, a / k)
        per_seed[seed] = pts
    points = [SweepPoint(b, acc[b] / n[b], cost[b] / n[b], n[b]) for b in budgets]
    rho = spearman([p.b_total for p in points], [p.accuracy for p in points])
    return SweepResult(points, per_seed, rho, max_cost)
