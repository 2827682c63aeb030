"""Independent reference computations the engine tests check against.

These deliberately avoid the library's solver and search code paths: the
until oracle is a depth-limited sum over all paths (memoized on
(state, remaining depth)), reach sets come from scipy's all-pairs shortest
path, and the flowerhead oracle is a plain left-to-right scan.
"""

from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from bouquetmc.formula import UntilQuery, eval_state


def until_prob_enumeration(model, q: UntilQuery, depth: int, start: int) -> float:
    """Total probability of paths from `start` that satisfy the until formula
    within `depth` steps: exhaustive path enumeration, aggregated by the
    Markov property on (state, remaining)."""
    sat2 = [eval_state(model, q.right, s) for s in range(model.n)]
    sat1 = [eval_state(model, q.left, s) for s in range(model.n)]

    @lru_cache(maxsize=None)
    def mass(s: int, remaining: int) -> float:
        if sat2[s]:
            return 1.0
        if not sat1[s]:
            return 0.0
        if remaining == 0:
            return 0.0
        return sum(p * mass(t, remaining - 1) for t, p in model.successors(s))

    return mass(start, depth)


def unresolved_mass(model, q: UntilQuery, depth: int, start: int) -> float:
    """Probability of paths still undecided after `depth` steps; bounds the
    truncation error of until_prob_enumeration from above."""
    sat2 = [eval_state(model, q.right, s) for s in range(model.n)]
    sat1 = [eval_state(model, q.left, s) for s in range(model.n)]

    @lru_cache(maxsize=None)
    def mass(s: int, remaining: int) -> float:
        if sat2[s] or not sat1[s]:
            return 0.0
        if remaining == 0:
            return 1.0
        return sum(p * mass(t, remaining - 1) for t, p in model.successors(s))

    return mass(start, depth)


def reach_closure(model) -> np.ndarray:
    """Boolean matrix R with R[s, t] iff t is in reach*(s) (s included)."""
    graph = csr_matrix(
        (np.ones(len(model.col), dtype=np.int8), model.col, model.row_ptr),
        shape=(model.n, model.n),
    )
    dist = shortest_path(graph, method="D", directed=True, unweighted=True)
    return np.isfinite(dist)


def earliest_flower_linear(reach_counts: np.ndarray, sequence: list[int], k: int) -> int:
    """Left-to-right scan for the first state whose reach* size is <= k."""
    for s in sequence:
        if reach_counts[s] <= k:
            return s
    raise ValueError("no flower in sequence")
