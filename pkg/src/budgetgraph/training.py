"""Router training pipeline: contrast pool in, :class:`RouterModel` out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyFeasible, EmptyTrainingSet
from .features import featurize_many
from .graph import ACTIONS
from .pool import (
    DEFAULT_ALPHA_POL,
    TierThresholds,
    TraceRecord,
    fit_thresholds,
    policy_soft_target,
    tier_labels,
)
from .router import (
    COST_CLAMP,
    COST_MIN_OBS,
    COST_PRIORS,
    COST_WINDOW,
    DEFAULT_ALPHA_ASYM,
    DEFAULT_CLASS_WEIGHTS,
    DEFAULT_HIDDEN,
    DEFAULT_LAMBDA_RANK,
    DEFAULT_MARGIN,
    DEFAULT_TAU,
    ORDINAL_TRAIN,
    POLICY_TRAIN,
    SUCCESS_TRAIN,
    CostEstimator,
    RouterModel,
    TrainConfig,
    approx_tokens,
    policy_input,
    train_ordinal,
    train_policy,
    train_success,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RouterTrainConfig:
    success: TrainConfig = SUCCESS_TRAIN
    ordinal: TrainConfig = ORDINAL_TRAIN
    policy: TrainConfig = POLICY_TRAIN
    alpha_pol: float = DEFAULT_ALPHA_POL
    lambda_rank: float = DEFAULT_LAMBDA_RANK
    margin: float = DEFAULT_MARGIN
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    tau: tuple[float, float] = DEFAULT_TAU
    class_weights: tuple[float, float, float] = DEFAULT_CLASS_WEIGHTS
    alpha_asym: float = DEFAULT_ALPHA_ASYM  # recorded only
    priors: tuple[float, float, float] = tuple(COST_PRIORS[a] for a in ACTIONS)
    cost_window: int = COST_WINDOW
    cost_min_obs: int = COST_MIN_OBS
    cost_clamp: tuple[float, float] = COST_CLAMP
    seed_estimator: bool = True
    # None fits the percentiles from the pool; a pair pins (b25, b75)
    thresholds: tuple[float, float] | None = None

    def new_estimator(self) -> CostEstimator:
        return CostEstimator(dict(zip(ACTIONS, self.priors)), self.cost_window,
                             self.cost_min_obs, self.cost_clamp)


# Explicit settings for the synthetic study. The library defaults are kept as
# documented; at a pool of a few thousand rows and full-batch updates they
# take too few steps to move linear heads off zero.
SYNTHETIC_TRAIN = RouterTrainConfig(
    success=TrainConfig(epochs=300, lr=0.05, weight_decay=1e-4),
    ordinal=TrainConfig(epochs=300, lr=0.05, weight_decay=1e-4),
    policy=TrainConfig(epochs=300, lr=0.01, weight_decay=1e-4),
)


@dataclass
class TrainReport:
    n_records: int
    n_ordinal: int
    n_policy: int
    curves: dict[str, list[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"n_records": self.n_records, "n_ordinal": self.n_ordinal,
                "n_policy": self.n_policy, "curves": self.curves}


def policy_rows(records: Sequence[TraceRecord], success_logits: np.ndarray, caps,
                alpha_pol: float = DEFAULT_ALPHA_POL):
    """Policy inputs and soft targets, one row per record and tier.

    Every tier is paired with every record so the policy sees how the target
    shifts as the cap tightens; tiers whose cap admits no action are skipped.
    """
    Z, T = [], []
    for rec, f in zip(records, success_logits):
        for tier in range(3):
            try:
                target = policy_soft_target(rec, tier, alpha_pol, caps)
            except EmptyFeasible:
                continue
            Z.append(policy_input(f, tier))
            T.append(target.as_array())
    if not Z:
        raise EmptyTrainingSet("no record has a feasible action under any tier")
    return np.stack(Z), np.stack(T)


def seed_estimator(records: Sequence[TraceRecord],
                   est: CostEstimator | None = None) -> CostEstimator:
    """Fill the estimator windows with the pool's realised costs, in pool order."""
    est = est or CostEstimator()
    for rec in records:
        n_in = approx_tokens(rec.input_text)
        for a in ACTIONS:
            est.observe(a, rec.cost[a], n_in)
    return est


def train_router(records: Sequence[TraceRecord],
                 cfg: RouterTrainConfig = RouterTrainConfig()) -> tuple[RouterModel, TrainReport]:
    """Fit thresholds, success heads, ordinal heads and policy from a contrast pool."""
    if not records:
        raise EmptyTrainingSet("empty pool")
    th = fit_thresholds(records) if cfg.thresholds is None else TierThresholds(*cfg.thresholds)
    X = featurize_many([r.input_text for r in records], [r.depth for r in records])
    Y = np.stack([r.correct_vector() for r in records])

    success, s_curve = train_success(X, Y, cfg.success, cfg.lambda_rank, cfg.margin)

    tiers = tier_labels(records, th)
    keep = [i for i, t in enumerate(tiers) if t is not None]
    ordinal, o_curve = train_ordinal(X[keep], [tiers[i] for i in keep], cfg.ordinal,
                                     cfg.class_weights, cfg.tau)
    ordinal.alpha_asym = cfg.alpha_asym

    F = X @ success.W.T + success.b
    Z, T = policy_rows(records, F, th.caps(), cfg.alpha_pol)
    policy, p_curve = train_policy(Z, T, cfg.policy, cfg.hidden)

    est = cfg.new_estimator()
    if cfg.seed_estimator:
        seed_estimator(records, est)
    router = RouterModel(success, ordinal, policy, est, th)
    report = TrainReport(len(records), len(keep), len(Z),
                         {"success": s_curve, "ordinal": o_curve, "policy": p_curve})
    log.info("trained router on %d records (b25=%s, b75=%s)", len(records), th.b25, th.b75)
    return router, report
