"""Time the numba kernels against their numpy counterparts.

Usage::

    python benchmarks/bench_kernels.py [--rows 100000] [--repeat 5]

Both variants are called directly, so the ``BUDGETGRAPH_DISABLE_NUMBA`` flag
does not matter here. The first numba call (compilation) is excluded.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from budgetgraph import _kernels as k


def _cases(n: int, rng: np.random.Generator) -> dict:
    logits3 = rng.normal(0, 2, (n, 3))
    labels = rng.integers(0, 2, (n, 3)).astype(np.float64)
    logits2 = rng.normal(0, 2, (n, 2))
    tiers = rng.integers(0, 3, n).astype(np.int64)
    weights = np.array([1.0, 1.0, 1.0])
    dist = rng.dirichlet(np.ones(3), n)
    est = rng.uniform(10, 3000, (n, 3))
    budget = rng.uniform(10, 3000, n)
    ranks_in = rng.integers(0, n // 10 + 1, n).astype(np.float64)
    return {
        "success_loss_grad": ((logits3, labels, 1.0, 1.0),
                              k._nb_success_loss_grad, k._np_success_loss_grad),
        "ordinal_loss_grad": ((logits2, tiers, weights),
                              k._nb_ordinal_loss_grad, k._np_ordinal_loss_grad),
        "masked_argmax": ((dist, est, budget), k._nb_masked_argmax, k._np_masked_argmax),
        "average_ranks": ((ranks_in,), k._nb_average_ranks, k._np_average_ranks),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not k.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, (inputs, nb, npf) in _cases(args.rows, rng).items():
        nb(*inputs)  # compile
        t_nb = min(timeit.repeat(lambda: nb(*inputs), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: npf(*inputs), number=1, repeat=args.repeat))
        print(f"{name:<20}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
