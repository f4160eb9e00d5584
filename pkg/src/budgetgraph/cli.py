"""Command-line interface.

Subcommands: ``make-pool``, ``train-router``, ``run``, ``eval`` and ``sweep``.
Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .backends import BackendSet, http_backend, mock_backend
from .config import AppConfig, BackendsConfig, load_config
from .errors import BudgetGraphError
from .executor import RunTrace, read_traces, run, write_traces
from .graph import Tier
from .metrics import (
    EvalRow,
    build_report,
    format_sweep,
    format_table,
    judge_answer,
    run_stats,
)
from .pool import ingest_pool, write_pool
from .router import load_router, save_router
from .study import METHODS, StudyConfig, router_for, sweep
from .synthetic import SyntheticProfile, generate_pool, load_profile
from .training import SYNTHETIC_TRAIN, train_router

log = logging.getLogger("budgetgraph")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _backend(spec: str, tier: Tier, cfg: BackendsConfig, seed: int, model_key: str):
    kind, _, arg = spec.partition(":")
    if kind == "mock" and arg:
        return mock_backend(arg, seed, name=f"mock-{tier.value}", tier=tier)
    if kind == "http" and arg:
        return http_backend(arg, cfg.models[model_key], cfg.api_key_env or None, cfg.timeout,
                            tier=tier, max_attempts=cfg.max_attempts, backoff=cfg.backoff)
    raise UsageError(f"--backend: expected mock:<scenario> or http:<endpoint>, got {spec!r}")


def make_backends(spec: str | None, cfg: BackendsConfig, seed: int) -> BackendSet:
    """One backend per tier; per-tier specs in the config override ``spec``."""
    made = {}
    for tier in Tier:
        tier_spec = getattr(cfg, tier.value) or spec
        if not tier_spec:
            raise UsageError(f"--backend is required (no [backends] {tier.value} entry)")
        made[tier] = _backend(tier_spec, tier, cfg, seed, tier.value)
    return BackendSet(made[Tier.SMALL], made[Tier.MEDIUM], made[Tier.LARGE])


def _read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _config(args) -> AppConfig:
    return load_config(args.config)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_make_pool(args) -> int:
    profile = load_profile(args.profile) if args.profile else SyntheticProfile()
    records = generate_pool(args.n, args.seed, profile)
    write_pool(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_train_router(args) -> int:
    cfg = _config(args)
    train_cfg = cfg.router
    if args.preset == "synthetic":
        train_cfg = dataclasses.replace(
            train_cfg, success=SYNTHETIC_TRAIN.success, ordinal=SYNTHETIC_TRAIN.ordinal,
            policy=SYNTHETIC_TRAIN.policy)
    records = ingest_pool(args.pool)
    router, report = train_router(records, train_cfg)
    save_router(router, args.out)
    th = router.thresholds
    print(f"trained on {report.n_records} records; b25={th.b25:g} b75={th.b75:g}; "
          f"wrote {args.out}")
    return EXIT_OK


def _questions(args) -> list[dict]:
    if args.question is not None:
        return [{"question_id": "q0", "question": args.question}]
    rows = _read_jsonl(args.dataset)
    for i, row in enumerate(rows):
        if "question" not in row:
            raise BudgetGraphError(f"{args.dataset}: line {i + 1} has no 'question'")
        row.setdefault("question_id", f"q{i}")
    return rows


def cmd_run(args) -> int:
    cfg = _config(args)
    run_cfg = cfg.run
    if args.budget is not None:
        run_cfg = dataclasses.replace(run_cfg, b_total=args.budget)
    run_cfg = dataclasses.replace(
        run_cfg, executor=dataclasses.replace(run_cfg.executor, seed=args.seed))
    if args.method == "routed":
        if not args.router:
            raise UsageError("--router is required for --method routed")
        trained = load_router(args.router)
    else:
        trained = None
    backends = make_backends(args.backend, cfg.backends, args.seed)
    router = router_for(args.method, trained, args.seed)
    traces: list[RunTrace] = []
    for q in _questions(args):
        answer, trace = run(q["question"], run_cfg, backends, router,
                            f"{args.method}:{q['question_id']}")
        trace.meta.update(question_id=q["question_id"], method=args.method)
        traces.append(trace)
        print(f"{q['question_id']}\t{answer}\t{trace.totals.total()}")
    if args.trace_out:
        write_traces(traces, args.trace_out)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    refs = {r["question_id"]: r for r in _read_jsonl(args.refs)}
    judge = None
    if args.mode == "semantic":
        spec = args.judge_backend or cfg.backends.judge
        if not spec:
            raise UsageError("--mode semantic needs --judge-backend or [backends] judge")
        judge = _backend(spec, Tier.LARGE, cfg.backends, 0, "judge")
    rows: list[EvalRow] = []
    by_method: dict[str, list[RunTrace]] = {}
    for path in args.traces:
        for tr in read_traces(path):
            qid = tr.meta.get("question_id", tr.run_id)
            method = tr.meta.get("method", Path(path).stem)
            if qid not in refs:
                raise BudgetGraphError(f"run {tr.run_id!r}: question {qid!r} not in refs")
            verdict = judge_answer(args.mode, tr.final_answer, refs[qid]["reference"], judge)
            flags = {"JudgeParseError": True} if verdict.diagnostics.get("JudgeParseError") else {}
            rows.append(EvalRow.make(qid, method, verdict.correct, tr.totals.total(), args.beta,
                                     **flags))
            by_method.setdefault(method, []).append(tr)
    methods = args.methods.split(",") if args.methods else None
    stats = {m: run_stats(trs) for m, trs in by_method.items()}
    report = build_report(rows, args.beta, stats, methods)
    table = format_table(report)
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        Path(args.report).with_suffix(".txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def _budgets(text: str) -> list[float]:
    try:
        budgets = [float(b) for b in text.split(",") if b.strip()]
    except ValueError:
        raise UsageError(f"--budgets: not a comma-separated list of numbers: {text!r}") from None
    if not budgets:
        raise UsageError("--budgets: empty list")
    return budgets


def cmd_sweep(args) -> int:
    cfg = _config(args)
    budgets = _budgets(args.budgets)
    if args.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    profile = load_profile(args.profile) if args.profile else SyntheticProfile()
    study = StudyConfig(seed=args.seed, pool_size=args.pool_size, n_questions=args.n_questions,
                        profile=profile, run=cfg.run, beta=args.beta)
    seeds = [args.seed + i for i in range(args.repeat)]
    result = sweep(budgets, seeds, study, args.method)
    out = {"method": args.method, "beta": args.beta, "seeds": seeds, **result.to_dict()}
    text = format_sweep(result.points, result.rho)
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
        Path(args.out).with_suffix(".txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="budgetgraph", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    mp = sub.add_parser("make-pool", help="generate a synthetic contrast pool")
    mp.add_argument("--n", type=int, required=True)
    mp.add_argument("--seed", type=int, default=0)
    mp.add_argument("--profile", help="JSON generator profile")
    mp.add_argument("--out", required=True)
    mp.set_defaults(func=cmd_make_pool)

    tr = sub.add_parser("train-router", help="train a router from a pool file")
    tr.add_argument("--pool", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--config")
    tr.add_argument("--preset", choices=("config", "synthetic"), default="config",
                    help="'synthetic' swaps in the longer schedules used by the study")
    tr.set_defaults(func=cmd_train_router)

    rn = sub.add_parser("run", help="answer questions under a token budget")
    src = rn.add_mutually_exclusive_group(required=True)
    src.add_argument("--question")
    src.add_argument("--dataset", help="JSONL with question_id and question")
    rn.add_argument("--budget", type=float)
    rn.add_argument("--config")
    rn.add_argument("--backend", help="mock:<scenario.json> or http:<endpoint>")
    rn.add_argument("--router")
    rn.add_argument("--method", choices=METHODS, default="routed")
    rn.add_argument("--seed", type=int, default=0)
    rn.add_argument("--trace-out")
    rn.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score traces against references")
    ev.add_argument("--traces", nargs="+", required=True)
    ev.add_argument("--refs", required=True)
    ev.add_argument("--beta", type=float, required=True)
    ev.add_argument("--mode", choices=("exact", "semantic"), default="exact")
    ev.add_argument("--judge-backend")
    ev.add_argument("--methods", help="comma-separated method set for regret")
    ev.add_argument("--report")
    ev.add_argument("--config")
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", help="accuracy and spend across total budgets")
    sw.add_argument("--budgets", required=True, help="comma-separated totals")
    sw.add_argument("--repeat", type=int, default=1, help="number of seeds")
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--method", choices=METHODS, default="routed")
    sw.add_argument("--n-questions", type=int, default=50)
    sw.add_argument("--pool-size", type=int, default=3000)
    sw.add_argument("--profile")
    sw.add_argument("--beta", type=float, default=1e-4)
    sw.add_argument("--config")
    sw.add_argument("--out")
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BudgetGraphError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
