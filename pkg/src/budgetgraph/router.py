"""Learned node router: success heads, ordinal budget heads, and the policy MLP.

The three models consume the feature vector of a packed node input. The
success heads give per-action logits, the ordinal heads give a coarse budget
tier, and the policy maps ``[success logits, onehot(tier)]`` to an action
distribution. At inference the distribution is masked by estimated cost
against the node budget before taking the argmax.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from os import PathLike
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import (
    CorruptFile,
    DimensionMismatch,
    EmptyTrainingSet,
    NonFiniteInput,
    VersionMismatch,
)
from .features import FEATURE_DIM, featurize
from .graph import ACTIONS, Action
from .pool import TierThresholds

ROUTER_VERSION = 1

DEFAULT_TAU = (0.1, 0.5)
DEFAULT_CLASS_WEIGHTS = (1.0, 1.5, 3.0)
DEFAULT_ALPHA_ASYM = 0.1
DEFAULT_LAMBDA_RANK = 0.5
DEFAULT_MARGIN = 1.0
DEFAULT_HIDDEN = (32,)
POLICY_INPUT_DIM = 6

COST_PRIORS = {Action.IO: 60.0, Action.COT: 700.0, Action.DECOMPOSE: 2500.0}
COST_WINDOW = 256
COST_MIN_OBS = 5
COST_CLAMP = (0.5, 2.0)


def sigmoid(x):
    return _kernels.sigmoid(x)


def logit(p):
    p = np.clip(np.asarray(p, dtype=np.float64), _kernels.PROB_EPS, 1 - _kernels.PROB_EPS)
    return np.log(p) - np.log1p(-p)


def softmax(h: np.ndarray) -> np.ndarray:
    h = h - h.max(axis=-1, keepdims=True)
    e = np.exp(h)
    return e / e.sum(axis=-1, keepdims=True)


def _check_dim(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim:
        raise DimensionMismatch(f"expected trailing dimension {dim}, got {x.shape}")
    return x


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass
class SuccessModel:
    W: np.ndarray = field(default_factory=lambda: np.zeros((3, FEATURE_DIM)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.W.shape[1])
        return x @ self.W.T + self.b


@dataclass
class OrdinalModel:
    W: np.ndarray = field(default_factory=lambda: np.zeros((2, FEATURE_DIM)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(2))
    tau: tuple[float, float] = DEFAULT_TAU
    weights: tuple[float, float, float] = DEFAULT_CLASS_WEIGHTS
    # recorded for completeness; no loss term uses it
    alpha_asym: float = DEFAULT_ALPHA_ASYM

    def __post_init__(self):
        if not all(0.0 < t < 1.0 for t in self.tau):
            raise ValueError(f"decode thresholds must lie in (0, 1): {self.tau}")
        w0, w1, w2 = self.weights
        if not (w2 >= w1 >= w0 > 0):
            raise ValueError(f"class weights must satisfy w2 >= w1 >= w0 > 0: {self.weights}")

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.W.shape[1])
        return x @ self.W.T + self.b


class PolicyModel:
    """Fully connected ReLU network from the 6-dim routing input to 3 action logits."""

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]]):
        self.layers = [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for W, b in layers]
        if self.layers[0][0].shape[1] != POLICY_INPUT_DIM or self.layers[-1][0].shape[0] != 3:
            raise DimensionMismatch("policy network must map 6 inputs to 3 outputs")

    @classmethod
    def init(cls, hidden: Sequence[int] = DEFAULT_HIDDEN, seed: int = 0) -> "PolicyModel":
        rng = np.random.default_rng(seed)
        dims = [POLICY_INPUT_DIM, *hidden, 3]
        layers = []
        for d_in, d_out in zip(dims, dims[1:]):
            bound = math.sqrt(6.0 / d_in)  # He-uniform for ReLU layers
            layers.append((rng.uniform(-bound, bound, size=(d_out, d_in)), np.zeros(d_out)))
        return cls(layers)

    @classmethod
    def zeros(cls, hidden: Sequence[int] = DEFAULT_HIDDEN) -> "PolicyModel":
        dims = [POLICY_INPUT_DIM, *hidden, 3]
        return cls([(np.zeros((o, i)), np.zeros(o)) for i, o in zip(dims, dims[1:])])

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(W.shape[0] for W, _ in self.layers[:-1])

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer]

    def copy(self) -> "PolicyModel":
        return PolicyModel([(W.copy(), b.copy()) for W, b in self.layers])

    def _forward(self, Z: np.ndarray):
        acts = [Z]
        pre = []
        h = Z
        for i, (W, b) in enumerate(self.layers):
            a = h @ W.T + b
            pre.append(a)
            h = a if i == len(self.layers) - 1 else np.maximum(a, 0.0)
            acts.append(h)
        return pre, acts

    def logits(self, Z: np.ndarray) -> np.ndarray:
        Z = _check_dim(Z, POLICY_INPUT_DIM)
        return self._forward(Z)[0][-1]

    def distribution(self, Z: np.ndarray) -> np.ndarray:
        return softmax(self.logits(Z))

    def loss_and_grad(self, Z: np.ndarray, T: np.ndarray):
        """Mean soft cross-entropy ``-sum_a T_a log pi_a`` and parameter gradients."""
        Z = _check_dim(np.atleast_2d(Z), POLICY_INPUT_DIM)
        T = np.atleast_2d(np.asarray(T, dtype=np.float64))
        n = Z.shape[0]
        pre, acts = self._forward(Z)
        out = pre[-1]
        shifted = out - out.max(axis=1, keepdims=True)
        log_pi = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-(T * log_pi).sum() / n)
        pi = np.exp(log_pi)
        delta = (pi * T.sum(axis=1, keepdims=True) - T) / n
        grads: list[tuple[np.ndarray, np.ndarray]] = []
        for i in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[i]
            grads.append((delta.T @ acts[i], delta.sum(axis=0)))
            if i > 0:
                delta = (delta @ W) * (pre[i - 1] > 0.0)
        grads.reverse()
        return loss, grads


class CostEstimator:
    """Per-action running medians of realised cost and input length.

    Estimates scale the cost median by the ratio of the query input length to
    the input-length median, clamped to ``clamp``. Fixed priors are used until
    ``min_obs`` observations exist for an action.
    """

    def __init__(
        self,
        priors: dict[Action, float] | None = None,
        window: int = COST_WINDOW,
        min_obs: int = COST_MIN_OBS,
        clamp: tuple[float, float] = COST_CLAMP,
    ):
        self.priors = dict(COST_PRIORS if priors is None else priors)
        self.window = window
        self.min_obs = min_obs
        self.clamp = clamp
        self.costs = {a: deque(maxlen=window) for a in ACTIONS}
        self.inputs = {a: deque(maxlen=window) for a in ACTIONS}
        self.n_obs = {a: 0 for a in ACTIONS}

    def observe(self, action: Action, cost: float, input_len: float) -> None:
        if cost <= 0 or input_len < 0:
            raise ValueError("cost must be positive and input length non-negative")
        self.costs[action].append(float(cost))
        self.inputs[action].append(float(input_len))
        self.n_obs[action] += 1

    def estimate(self, action: Action, input_len: float) -> float:
        if input_len < 0:
            raise ValueError("input length must be non-negative")
        if len(self.costs[action]) < self.min_obs:
            return max(1.0, float(self.priors[action]))
        med_cost = float(np.median(self.costs[action]))
        med_in = float(np.median(self.inputs[action]))
        ratio = input_len / med_in if med_in > 0 else 1.0
        lo, hi = self.clamp
        return max(1.0, med_cost * min(max(ratio, lo), hi))

    def estimates(self, input_len: float) -> np.ndarray:
        return np.array([self.estimate(a, input_len) for a in ACTIONS])

    def copy(self) -> "CostEstimator":
        return CostEstimator.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "min_obs": self.min_obs,
            "clamp": list(self.clamp),
            "priors": {a.value: self.priors[a] for a in ACTIONS},
            "costs": {a.value: list(self.costs[a]) for a in ACTIONS},
            "inputs": {a.value: list(self.inputs[a]) for a in ACTIONS},
            "n_obs": {a.value: self.n_obs[a] for a in ACTIONS},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostEstimator":
        est = cls(
            priors={Action(k): float(v) for k, v in d["priors"].items()},
            window=int(d["window"]),
            min_obs=int(d["min_obs"]),
            clamp=(float(d["clamp"][0]), float(d["clamp"][1])),
        )
        for a in ACTIONS:
            est.costs[a].extend(float(c) for c in d["costs"][a.value])
            est.inputs[a].extend(float(c) for c in d["inputs"][a.value])
            est.n_obs[a] = int(d["n_obs"][a.value])
        return est


def estimate_cost(est: CostEstimator, action: Action, input_len: float) -> float:
    return est.estimate(action, input_len)


def approx_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


# ---------------------------------------------------------------------------
# forward passes and losses
# ---------------------------------------------------------------------------


def success_forward(model: SuccessModel, x: np.ndarray):
    """Return ``(probabilities, logits)`` for the three actions."""
    f = model.logits(x)
    return sigmoid(f), f


def success_loss(logits, labels, lambda_rank: float = DEFAULT_LAMBDA_RANK,
                 margin: float = DEFAULT_MARGIN):
    """Multi-head BCE plus margin ranking. Returns ``(loss, d loss / d logits)``."""
    loss, grad = _kernels.success_loss_grad(
        np.atleast_2d(np.asarray(logits, dtype=np.float64)),
        np.atleast_2d(np.asarray(labels, dtype=np.float64)),
        lambda_rank,
        margin,
    )
    return float(loss[0]), grad[0]


def ranking_term(logits, labels, margin: float = DEFAULT_MARGIN) -> float:
    f = np.asarray(logits, dtype=np.float64)
    total = 0.0
    for i in range(3):
        for j in range(3):
            if labels[i] == 1 and labels[j] == 0:
                total += max(0.0, margin - (f[i] - f[j]))
    return total


def ordinal_forward(model: OrdinalModel, x: np.ndarray) -> np.ndarray:
    """Cumulative probabilities ``(q1, q2)`` = P(tier >= 1), P(tier >= 2)."""
    return sigmoid(model.logits(x))


def decode_tier(q1: float, q2: float, tau1: float = DEFAULT_TAU[0],
                tau2: float = DEFAULT_TAU[1]) -> int:
    return int(q1 >= tau1) + int(q2 >= tau2)


def ordinal_loss(g, tier: int, weights: Sequence[float] = DEFAULT_CLASS_WEIGHTS):
    loss, grad = _kernels.ordinal_loss_grad(
        np.atleast_2d(np.asarray(g, dtype=np.float64)),
        np.array([tier], dtype=np.int64),
        np.asarray(weights, dtype=np.float64),
    )
    return float(loss[0]), grad[0]


def policy_input(success_logits, tier: int) -> np.ndarray:
    f = np.asarray(success_logits, dtype=np.float64)
    if f.shape != (3,) or not np.all(np.isfinite(f)):
        raise NonFiniteInput(f"success logits must be 3 finite values, got {success_logits!r}")
    if tier not in (0, 1, 2):
        raise ValueError(f"tier must be 0, 1 or 2, got {tier}")
    z = np.zeros(POLICY_INPUT_DIM)
    z[:3] = f
    z[3 + tier] = 1.0
    return z


def policy_forward(model: PolicyModel, success_logits, tier: int) -> np.ndarray:
    return model.distribution(policy_input(success_logits, tier)[None, :])[0]


def policy_loss(model: PolicyModel, z, target):
    """Soft cross-entropy of the policy at input ``z`` against ``target`` weights."""
    t = target.as_array() if hasattr(target, "as_array") else np.asarray(target, dtype=np.float64)
    return model.loss_and_grad(np.asarray(z, dtype=np.float64)[None, :], t[None, :])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    lr: float = 2e-3
    weight_decay: float = 0.05
    batch_size: int | None = None  # None = full batch
    seed: int = 0


SUCCESS_TRAIN = TrainConfig(epochs=5, lr=2e-3, weight_decay=0.05)
ORDINAL_TRAIN = TrainConfig(epochs=5, lr=2e-3, weight_decay=0.05)
POLICY_TRAIN = TrainConfig(epochs=10, lr=3e-4, weight_decay=1e-4)


class AdamW:
    """Adam with decoupled weight decay, applied in place to a list of arrays."""

    def __init__(self, params, lr, weight_decay=0.0, decay_mask=None,
                 betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.wd = weight_decay
        self.decay_mask = decay_mask or [True] * len(params)
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v, decay in zip(self.params, grads, self.m, self.v, self.decay_mask):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            if decay and self.wd:
                p -= self.lr * self.wd * p
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _batches(n: int, cfg: TrainConfig, rng: np.random.Generator):
    if cfg.batch_size is None or cfg.batch_size >= n:
        yield np.arange(n)
        return
    order = rng.permutation(n)
    for start in range(0, n, cfg.batch_size):
        yield order[start:start + cfg.batch_size]


def _fit_linear(X, loss_grad, n_out, cfg: TrainConfig):
    X = _check_dim(np.atleast_2d(X), X.shape[-1])
    n, d = X.shape
    if n == 0:
        raise EmptyTrainingSet("no training rows")
    W = np.zeros((n_out, d))
    b = np.zeros(n_out)
    opt = AdamW([W, b], cfg.lr, cfg.weight_decay, decay_mask=[True, False])
    rng = np.random.default_rng(cfg.seed)
    curve = []
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in _batches(n, cfg, rng):
            Xb = X[idx]
            loss, G = loss_grad(Xb @ W.T + b, idx)
            total += float(loss.sum())
            opt.step([G.T @ Xb / len(idx), G.sum(axis=0) / len(idx)])
        curve.append(total / n)
    return W, b, curve


def train_success(X, labels, cfg: TrainConfig = SUCCESS_TRAIN,
                  lambda_rank: float = DEFAULT_LAMBDA_RANK, margin: float = DEFAULT_MARGIN):
    """Fit the success heads; returns ``(SuccessModel, per-epoch mean loss)``."""
    Y = np.asarray(labels, dtype=np.float64)
    if len(Y) == 0:
        raise EmptyTrainingSet("no training rows")

    def lg(F, idx):
        return _kernels.success_loss_grad(F, Y[idx], lambda_rank, margin)

    W, b, curve = _fit_linear(np.asarray(X, dtype=np.float64), lg, 3, cfg)
    return SuccessModel(W, b), curve


def train_ordinal(X, tiers, cfg: TrainConfig = ORDINAL_TRAIN,
                  weights: Sequence[float] = DEFAULT_CLASS_WEIGHTS,
                  tau: tuple[float, float] = DEFAULT_TAU):
    """Fit the ordinal heads; all-fail rows must already be excluded."""
    t = np.asarray(tiers, dtype=np.int64)
    if len(t) == 0:
        raise EmptyTrainingSet("no training rows")
    w = np.asarray(weights, dtype=np.float64)

    def lg(G, idx):
        return _kernels.ordinal_loss_grad(G, t[idx], w)

    W, b, curve = _fit_linear(np.asarray(X, dtype=np.float64), lg, 2, cfg)
    return OrdinalModel(W, b, tau=tuple(tau), weights=tuple(weights)), curve


def train_policy(Z, targets, cfg: TrainConfig = POLICY_TRAIN,
                 hidden: Sequence[int] = DEFAULT_HIDDEN):
    Z = np.asarray(Z, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    if len(Z) == 0:
        raise EmptyTrainingSet("no training rows")
    model = PolicyModel.init(hidden, seed=cfg.seed)
    params = model.params()
    mask = [i % 2 == 0 for i in range(len(params))]  # decay weights, not biases
    opt = AdamW(params, cfg.lr, cfg.weight_decay, decay_mask=mask)
    rng = np.random.default_rng(cfg.seed + 1)
    curve = []
    n = len(Z)
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in _batches(n, cfg, rng):
            loss, grads = model.loss_and_grad(Z[idx], T[idx])
            total += loss * len(idx)
            opt.step([g for pair in grads for g in pair])
        curve.append(total / n)
    return model, curve


def train(component: str, *args, **kwargs):
    """Dispatch to ``train_success``, ``train_ordinal`` or ``train_policy``."""
    fn = {"success": train_success, "ordinal": train_ordinal, "policy": train_policy}
    try:
        return fn[component.lower()](*args, **kwargs)
    except KeyError:
        raise ValueError(f"unknown component {component!r}") from None


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------


@dataclass
class Prediction:
    """Router read-out for one node before the budget is applied."""

    features: np.ndarray
    success_logits: np.ndarray
    success_probs: np.ndarray
    q: np.ndarray
    tier: int
    input_len: int


@dataclass
class Decision:
    action: Action
    dist: np.ndarray
    tier: int
    estimates: np.ndarray
    mask: np.ndarray
    budget: float
    forced_cheapest: bool = False

    def diagnostics(self) -> dict:
        d = {
            "dist": [float(p) for p in self.dist],
            "tier": self.tier,
            "estimates": [float(c) for c in self.estimates],
            "mask": [bool(m) for m in self.mask],
            "node_budget": float(self.budget),
        }
        if self.forced_cheapest:
            d["ForcedCheapest"] = True
        return d


def masked_choice(dist, estimates, budget: float) -> tuple[Action, bool]:
    a, forced = _kernels.masked_argmax(
        np.asarray(dist, dtype=np.float64)[None, :],
        np.asarray(estimates, dtype=np.float64)[None, :],
        np.array([float(budget)]),
    )
    return ACTIONS[int(a[0])], bool(forced[0])


@dataclass
class RouterModel:
    success: SuccessModel = field(default_factory=SuccessModel)
    ordinal: OrdinalModel = field(default_factory=OrdinalModel)
    policy: PolicyModel = field(default_factory=PolicyModel.zeros)
    estimator: CostEstimator = field(default_factory=CostEstimator)
    thresholds: TierThresholds = field(default_factory=TierThresholds)
    version: int = ROUTER_VERSION

    def __post_init__(self):
        if self.success.W.shape[1] != self.ordinal.W.shape[1]:
            raise DimensionMismatch("success and ordinal heads disagree on feature dimension")

    @property
    def feature_dim(self) -> int:
        return self.success.W.shape[1]

    def caps(self) -> tuple[float, float, float]:
        return self.thresholds.caps()

    def predict(self, packet: str, depth: int) -> Prediction:
        x = featurize(packet, depth)
        probs, f = success_forward(self.success, x)
        q = ordinal_forward(self.ordinal, x)
        tier = decode_tier(q[0], q[1], *self.ordinal.tau)
        return Prediction(x, f, probs, q, tier, approx_tokens(packet))

    def choose(self, pred: Prediction, budget: float) -> Decision:
        dist = policy_forward(self.policy, pred.success_logits, pred.tier)
        est = self.estimator.estimates(pred.input_len)
        action, forced = masked_choice(dist, est, budget)
        return Decision(action, dist, pred.tier, est, est <= budget, budget, forced)


def select_action(router: RouterModel, packet: str, depth: int, node_budget: float):
    """Budget-feasible argmax of the policy. Returns ``(Action, Decision)``."""
    if not node_budget > 0:
        raise ValueError("node budget must be positive")
    decision = router.choose(router.predict(packet, depth), node_budget)
    return decision.action, decision


class FixedRouter:
    """Baseline that always takes one action, ignoring predictions and masks."""

    def __init__(self, action: Action, estimator: CostEstimator | None = None,
                 thresholds: TierThresholds | None = None):
        self.action = action
        self.estimator = estimator or CostEstimator()
        self.thresholds = thresholds or TierThresholds()

    def caps(self):
        return self.thresholds.caps()

    def predict(self, packet: str, depth: int) -> Prediction:
        return Prediction(np.zeros(0), np.zeros(3), np.full(3, 0.5), np.zeros(2), 0,
                          approx_tokens(packet))

    def choose(self, pred: Prediction, budget: float) -> Decision:
        est = self.estimator.estimates(pred.input_len)
        dist = np.zeros(3)
        dist[self.action.index] = 1.0
        return Decision(self.action, dist, pred.tier, est, est <= budget, budget)


class RandomRouter(FixedRouter):
    """Baseline that samples an action uniformly, seeded."""

    def __init__(self, seed: int = 0, **kw):
        super().__init__(Action.IO, **kw)
        self.rng = np.random.default_rng(seed)

    def choose(self, pred: Prediction, budget: float) -> Decision:
        self.action = ACTIONS[int(self.rng.integers(3))]
        return super().choose(pred, budget)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _arr(a: np.ndarray):
    return np.asarray(a, dtype=np.float64).tolist()


def router_to_dict(router: RouterModel) -> dict:
    return {
        "version": router.version,
        "feature_dim": router.feature_dim,
        "success": {"W": _arr(router.success.W), "b": _arr(router.success.b)},
        "ordinal": {
            "W": _arr(router.ordinal.W),
            "b": _arr(router.ordinal.b),
            "tau": list(router.ordinal.tau),
            "weights": list(router.ordinal.weights),
            "alpha_asym": router.ordinal.alpha_asym,
        },
        "policy": {
            "hidden": list(router.policy.hidden),
            "layers": [{"W": _arr(W), "b": _arr(b)} for W, b in router.policy.layers],
        },
        "estimator": router.estimator.to_dict(),
        "thresholds": {"b25": float(router.thresholds.b25), "b75": float(router.thresholds.b75)},
    }


def router_from_dict(d: dict) -> RouterModel:
    if not isinstance(d, dict):
        raise CorruptFile("router file is not a JSON object")
    version = d.get("version")
    if version != ROUTER_VERSION:
        raise VersionMismatch(f"router file version {version!r}, reader expects {ROUTER_VERSION}")
    try:
        dim = int(d["feature_dim"])
        success = SuccessModel(np.array(d["success"]["W"], dtype=np.float64),
                               np.array(d["success"]["b"], dtype=np.float64))
        o = d["ordinal"]
        ordinal = OrdinalModel(
            np.array(o["W"], dtype=np.float64),
            np.array(o["b"], dtype=np.float64),
            tau=tuple(float(t) for t in o["tau"]),
            weights=tuple(float(w) for w in o["weights"]),
            alpha_asym=float(o.get("alpha_asym", DEFAULT_ALPHA_ASYM)),
        )
        policy = PolicyModel([
            (np.array(layer["W"], dtype=np.float64), np.array(layer["b"], dtype=np.float64))
            for layer in d["policy"]["layers"]
        ])
        estimator = CostEstimator.from_dict(d["estimator"])
        th = TierThresholds(float(d["thresholds"]["b25"]), float(d["thresholds"]["b75"]))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptFile(f"router file is incomplete or malformed: {exc}") from None
    if success.W.shape != (3, dim) or ordinal.W.shape != (2, dim):
        raise CorruptFile("head shapes do not match feature_dim")
    return RouterModel(success, ordinal, policy, estimator, th)


def dumps_router(router: RouterModel) -> str:
    return json.dumps(router_to_dict(router), separators=(",", ":"))


def save_router(router: RouterModel, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_router(router))
        fh.write("\n")


def load_router(path: str | PathLike) -> RouterModel:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    return router_from_dict(d)
