"""Numeric inner loops, compiled with numba when available.

Every kernel exists twice: a ``_nb_*`` loop version compiled with
``numba.njit`` and a ``_np_*`` vectorised numpy version. The public names
bind to the numba versions unless numba is missing or the environment
variable ``BUDGETGRAPH_DISABLE_NUMBA`` is set to a non-empty value other
than ``0``. Both versions must agree exactly on integer outputs and to
floating-point rounding on real outputs; the test suite checks this.
"""

from __future__ import annotations

import os

import numpy as np

PROB_EPS = 1e-12

_flag = os.environ.get("BUDGETGRAPH_DISABLE_NUMBA", "")
NUMBA_DISABLED = _flag not in ("", "0")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _np_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _np_bce(p_raw, y):
    p = np.clip(p_raw, PROB_EPS, 1.0 - PROB_EPS)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    # gradient of BCE(sigmoid(f)) wrt f; zero where the clamp is active
    live = (p_raw > PROB_EPS) & (p_raw < 1.0 - PROB_EPS)
    grad = np.where(live, p_raw - y, 0.0)
    return loss, grad


def _np_success_loss_grad(logits, labels, lam, margin):
    f = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    loss_el, grad = _np_bce(_np_sigmoid(f), y)
    loss = loss_el.sum(axis=1)
    if lam != 0.0:
        pos = y > 0.5
        pair = pos[:, :, None] & ~pos[:, None, :]
        hinge = margin - (f[:, :, None] - f[:, None, :])
        active = pair & (hinge > 0.0)
        loss = loss + lam * np.where(active, hinge, 0.0).sum(axis=(1, 2))
        grad = grad - lam * active.sum(axis=2) + lam * active.sum(axis=1)
    return loss, grad


def _np_ordinal_loss_grad(logits, tiers, weights):
    g = np.asarray(logits, dtype=np.float64)
    t = np.asarray(tiers, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)[t]
    z = np.stack([(t >= 1), (t >= 2)], axis=1).astype(np.float64)
    loss_el, grad = _np_bce(_np_sigmoid(g), z)
    return w * loss_el.sum(axis=1), w[:, None] * grad


def _np_masked_argmax(dist, est, budget):
    dist = np.asarray(dist, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    budget = np.asarray(budget, dtype=np.float64)
    feasible = est <= budget[:, None]
    masked = np.where(feasible, dist, -np.inf)
    top = masked.max(axis=1)
    cand = feasible & (dist == top[:, None])
    cheapest = np.where(cand, est, np.inf).min(axis=1)
    cand &= est == cheapest[:, None]
    forced = ~feasible.any(axis=1)
    action = np.where(forced, 0, np.argmax(cand, axis=1)).astype(np.int64)
    return action, forced


def _np_average_ranks(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # group boundaries of equal values in sorted order
    new_group = np.empty(n, dtype=bool)
    if n:
        new_group[0] = True
        new_group[1:] = xs[1:] != xs[:-1]
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:], n)
    avg = (starts + ends + 1) / 2.0  # mean of 1-based positions start+1..end
    group_of = np.cumsum(new_group) - 1
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg[group_of]
    return ranks


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _nb_sigmoid_scalar(x):
        if x >= 0.0:
            return 1.0 / (1.0 + np.exp(-x))
        ex = np.exp(x)
        return ex / (1.0 + ex)

    @numba.njit(cache=True)
    def _nb_bce_scalar(p_raw, y):
        p = min(max(p_raw, PROB_EPS), 1.0 - PROB_EPS)
        loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
        if p_raw > PROB_EPS and p_raw < 1.0 - PROB_EPS:
            return loss, p_raw - y
        return loss, 0.0

    @numba.njit(cache=True)
    def _nb_success_loss_grad(logits, labels, lam, margin):
        n, k = logits.shape
        loss = np.zeros(n)
        grad = np.zeros((n, k))
        for i in range(n):
            for a in range(k):
                l, g = _nb_bce_scalar(_nb_sigmoid_scalar(logits[i, a]), labels[i, a])
                loss[i] += l
                grad[i, a] = g
            if lam != 0.0:
                for a in range(k):
                    if labels[i, a] <= 0.5:
                        continue
                    for b in range(k):
                        if labels[i, b] > 0.5:
                            continue
                        h = margin - (logits[i, a] - logits[i, b])
                        if h > 0.0:
                            loss[i] += lam * h
                            grad[i, a] -= lam
                            grad[i, b] += lam
        return loss, grad

    @numba.njit(cache=True)
    def _nb_ordinal_loss_grad(logits, tiers, weights):
        n = logits.shape[0]
        loss = np.zeros(n)
        grad = np.zeros((n, 2))
        for i in range(n):
            w = weights[tiers[i]]
            for k in range(2):
                z = 1.0 if tiers[i] >= k + 1 else 0.0
                l, g = _nb_bce_scalar(_nb_sigmoid_scalar(logits[i, k]), z)
                loss[i] += w * l
                grad[i, k] = w * g
        return loss, grad

    @numba.njit(cache=True)
    def _nb_masked_argmax(dist, est, budget):
        n, k = dist.shape
        action = np.zeros(n, dtype=np.int64)
        forced = np.zeros(n, dtype=np.bool_)
        for i in range(n):
            best = -1
            for a in range(k):
                if est[i, a] > budget[i]:
                    continue
                if best < 0:
                    best = a
                elif dist[i, a] > dist[i, best]:
                    best = a
                elif dist[i, a] == dist[i, best] and est[i, a] < est[i, best]:
                    best = a
            if best < 0:
                forced[i] = True
                best = 0
            action[i] = best
        return action, forced

    @numba.njit(cache=True)
    def _nb_average_ranks(x):
        n = x.shape[0]
        order = np.argsort(x, kind="mergesort")
        ranks = np.empty(n)
        i = 0
        while i < n:
            j = i
            while j + 1 < n and x[order[j + 1]] == x[order[i]]:
                j += 1
            r = (i + j + 2) / 2.0
            for m in range(i, j + 1):
                ranks[order[m]] = r
            i = j + 1
        return ranks


def _as2d(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def success_loss_grad(logits, labels, lam, margin):
    """Per-row multi-head BCE plus weighted margin ranking loss.

    Returns ``(loss[n], dloss/dlogits[n, 3])``.
    """
    if USE_NUMBA:
        return _nb_success_loss_grad(_as2d(logits), _as2d(labels), float(lam), float(margin))
    return _np_success_loss_grad(logits, labels, float(lam), float(margin))


def ordinal_loss_grad(logits, tiers, weights):
    """Per-row class-weighted cumulative-link BCE. Returns ``(loss[n], grad[n, 2])``."""
    if USE_NUMBA:
        return _nb_ordinal_loss_grad(_as2d(logits), _as2d(tiers, np.int64), _as2d(weights))
    return _np_ordinal_loss_grad(logits, tiers, weights)


def masked_argmax(dist, est, budget):
    """Budget-masked argmax with ties broken toward the cheaper estimate.

    Rows where every action is masked return action 0 and ``forced=True``.
    """
    if USE_NUMBA:
        return _nb_masked_argmax(_as2d(dist), _as2d(est), _as2d(budget))
    return _np_masked_argmax(dist, est, budget)


def average_ranks(x):
    """1-based ranks with ties assigned their average rank."""
    if USE_NUMBA:
        return _nb_average_ranks(_as2d(x))
    return _np_average_ranks(x)


def sigmoid(x):
    return _np_sigmoid(x)
