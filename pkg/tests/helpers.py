"""Shared builders for the test suite."""

from __future__ import annotations

from budgetgraph.graph import Action
from budgetgraph.pool import TraceRecord


def make_record(correct, cost, rid="r", text="q", depth=1) -> TraceRecord:
    return TraceRecord(
        rid,
        text,
        dict(zip((Action.IO, Action.COT, Action.DECOMPOSE), correct)),
        dict(zip((Action.IO, Action.COT, Action.DECOMPOSE), cost)),
        "test",
        depth=depth,
    )


def select_oracle(dist, estimates, budget):
    """Brute-force masked argmax: best feasible mass, then cheaper estimate, then index.

    Returns ``(action_index, forced)``.
    """
    feasible = [a for a in range(3) if estimates[a] <= budget]
    if not feasible:
        return 0, True
    best = max(feasible, key=lambda a: (dist[a], -estimates[a], -a))
    return best, False


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    import numpy as np

    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    import numpy as np

    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def separable_fixture(n, seed, dim=320):
    """Feature rows where tier is a threshold of x[0] and head a succeeds iff x[1+a] > 0.

    Informative coordinates keep a margin from their thresholds; the remaining
    coordinates are sparse uninformative counts, as in a hashed bigram block.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    X = np.zeros((n, dim))
    X[:, 0] = rng.integers(0, 3, n) * 1.5 - 1.5 + rng.uniform(-0.5, 0.5, n)
    X[:, 1:4] = rng.choice([-1.0, 1.0], (n, 3)) * (0.25 + np.abs(rng.normal(0, 1, (n, 3))))
    for row in X:
        row[rng.choice(np.arange(4, dim), 8, replace=False)] = 0.25
    tiers = np.digitize(X[:, 0], [-0.75, 0.75])
    X[:, :4] *= 4.0
    Y = (X[:, 1:4] > 0).astype(np.float64)
    return X, tiers, Y
