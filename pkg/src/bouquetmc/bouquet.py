"""Hybrid until checking: sampling with flower detection and exact sub-solves.

A flower rooted at state s is the sub-chain induced by reach*(s) — s plus
everything reachable from it — when that set has at most k states. Because
the set is closed under transitions, the induced sub-chain is itself a valid
chain and an exact solve on it gives the true until probability at s.

Trace walks stop early at flower roots and contribute the exact probability
instead of a Bernoulli outcome. Flower-ness is monotone along any path
(reach*(s') is a subset of reach*(s) whenever s -> s'), which makes binary
search valid for locating the earliest flower root on a trace segment, and
makes "not a flower" propagate backward along traces.

Per-state knowledge lives in an AnnotationStore: the structural flower
status is formula-agnostic and reusable across queries; exact probabilities
are cached per formula fingerprint.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import Dtmc, FetchCounter
from .formula import UntilQuery, formula_fingerprint
from .nmc import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_until
from .smc import (
    DEFAULT_MAX_PATH_LENGTH,
    EstimationResult,
    TraceStreams,
    VerdictTally,
    required_samples,
    verdict_codes,
    CODE_TRUE,
    CODE_FALSE,
)

UNKNOWN, NOTFLOWER, FLOWER = 0, 1, 2

BOUQUET_SAMPLE_FACTOR = 0.7
DEFAULT_R_PROB = 0.01


class SolverDivergenceError(RuntimeError):
    """A flower solve failed to converge; the estimate would be unsound."""


def default_k(n: int) -> int:
    """Flower-size threshold heuristic: floor(sqrt(n)), clamped to >= 2."""
    if n < 1:
        raise ValueError(f"state count must be positive, got {n}")
    return max(2, math.isqrt(n))


def bouquet_samples(n_s: int) -> int:
    """Hybrid sample budget for an SMC budget of n_s: ceil(0.7 * n_s)."""
    if n_s < 1:
        raise ValueError(f"sample count must be positive, got {n_s}")
    return math.ceil(BOUQUET_SAMPLE_FACTOR * n_s)


@dataclass
class BouquetParams:
    """Knobs of one hybrid run. samples defaults to ceil(0.7 * N_s) where
    N_s is the Chernoff-Hoeffding requirement for (epsilon, delta)."""

    k: int
    r_prob: float = DEFAULT_R_PROB
    epsilon: float = 0.05
    delta: float = 0.05
    samples: Optional[int] = None
    max_path_length: int = DEFAULT_MAX_PATH_LENGTH
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.r_prob <= 1.0:
            raise ValueError(f"r_prob must be in [0,1], got {self.r_prob}")
        if self.samples is None:
            self.samples = bouquet_samples(required_samples(self.epsilon, self.delta))


@dataclass(eq=False)
class AnnotationStore:
    """Per-state flower knowledge plus per-formula probability cache.

    All structural annotations in one store are relative to a single k.
    reach_searches counts detection searches actually run (cache misses in
    is_flower); nmc_solves counts flower solves actually run. When
    search_log is a list, is_flower appends each state it searches.
    """

    n: int
    k: int
    flower: np.ndarray = None
    reach_count: dict = field(default_factory=dict)
    prob_cache: dict = field(default_factory=dict)
    reach_searches: int = 0
    nmc_solves: int = 0
    search_log: Optional[list] = None

    def __post_init__(self):
        if self.flower is None:
            self.flower = np.zeros(self.n, dtype=np.int8)

    def state(self, s: int) -> int:
        return int(self.flower[s])

    def mark(self, s: int, value: int, reach: Optional[int] = None) -> None:
        current = self.flower[s]
        if current != UNKNOWN and current != value:
            raise RuntimeError(f"contradictory annotation at state {s}: {current} vs {value}")
        self.flower[s] = value
        if reach is not None:
            self.reach_count[s] = reach

    def annotated(self) -> int:
        return int(np.count_nonzero(self.flower))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AnnotationStore):
            return NotImplemented
        return (
            self.n == other.n
            and self.k == other.k
            and np.array_equal(self.flower, other.flower)
            and self.reach_count == other.reach_count
            and self.prob_cache == other.prob_cache
        )


@dataclass
class Flower:
    """Reachability-closed sub-chain rooted at a flower state.

    to_parent[i] is the parent-chain identity of sub-chain state i;
    sub_model.initial is the image of the root.
    """

    sub_model: Dtmc
    to_parent: list[int]

    @property
    def root(self) -> int:
        return self.to_parent[self.sub_model.initial]


def reach_bounded(model, s: int, k: int) -> Optional[frozenset[int]]:
    """reach*(s) = {s} plus all states reachable in >= 1 steps, by worklist
    search aborting as soon as the set exceeds k. Returns the full set, or
    None when it is larger than k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    visited = {s}
    stack = [s]
    while stack:
        t = stack.pop()
        for u, _ in model.successors(t):
            if u not in visited:
                visited.add(u)
                if len(visited) > k:
                    return None
                stack.append(u)
    return frozenset(visited)


def is_flower(model, store: AnnotationStore, s: int, k: int) -> bool:
    """Memoized flower test: returns the stored annotation when present,
    otherwise runs the bounded reachability search and records the result."""
    if store.k != k:
        raise ValueError(f"store built with k={store.k}, queried with k={k}")
    status = store.state(s)
    if status != UNKNOWN:
        return status == FLOWER
    store.reach_searches += 1
    if store.search_log is not None:
        store.search_log.append(s)
    reach = reach_bounded(model, s, k)
    if reach is None:
        store.mark(s, NOTFLOWER)
        return False
    store.mark(s, FLOWER, reach=len(reach))
    return True


def find_flowerhead(model, store: AnnotationStore, a: list[int], c_s: int, k: int) -> int:
    """Earliest flower root in the sequence a ++ [c_s].

    Precondition: c_s is a known flower. Binary search over a is valid
    because flower-ness is monotone along the trace. Afterwards every
    a-state strictly before the result is annotated NotFlower and every
    a-state at or after it is annotated Flower.
    """
    if store.state(c_s) != FLOWER and not is_flower(model, store, c_s, k):
        raise ValueError(f"state {c_s} is not a flower at k={k}")
    lo, hi = 0, len(a) - 1
    first = len(a)  # position of the earliest flower in a, if any
    while lo <= hi:
        mid = (lo + hi) // 2
        if is_flower(model, store, a[mid], k):
            first = mid
            hi = mid - 1
        else:
            lo = mid + 1
    for i in range(first):
        if store.state(a[i]) == UNKNOWN:
            store.mark(a[i], NOTFLOWER)
    for i in range(first, len(a)):
        if store.state(a[i]) == UNKNOWN:
            store.mark(a[i], FLOWER)
    return a[first] if first < len(a) else c_s


def get_flower(model, store: AnnotationStore, s_f: int) -> Flower:
    """Extract the induced sub-chain on reach*(s_f) with s_f as initial.

    Touches raw transition arrays rather than the instrumented accessors:
    in the I/O cost model construction is charged a flat k by the engine.
    """
    if store.state(s_f) != FLOWER:
        raise ValueError(f"state {s_f} is not annotated as a flower")
    members = _raw_reach(model, s_f, store.k)
    if members is None:
        raise RuntimeError(f"annotation inconsistency: reach*({s_f}) exceeds k={store.k}")
    ordered = sorted(members)
    index = {p: i for i, p in enumerate(ordered)}
    row_ptr, col, prob = model.row_ptr, model.col, model.prob
    rows = []
    for p in ordered:
        i0, i1 = row_ptr[p], row_ptr[p + 1]
        rows.append([(index[int(t)], float(pr)) for t, pr in zip(col[i0:i1], prob[i0:i1])])
    bits = model.label_bits[ordered].copy()
    sub = Dtmc.from_rows(len(ordered), index[s_f], rows, list(model.ap_names))
    sub.label_bits[:] = bits
    return Flower(sub_model=sub, to_parent=ordered)


def _raw_reach(model, s: int, k: int) -> Optional[set[int]]:
    """reach_bounded over raw arrays (uncounted row access)."""
    row_ptr, col = model.row_ptr, model.col
    visited = {s}
    stack = [s]
    while stack:
        t = stack.pop()
        for j in range(row_ptr[t], row_ptr[t + 1]):
            u = int(col[j])
            if u not in visited:
                visited.add(u)
                if len(visited) > k:
                    return None
                stack.append(u)
    return visited


def flower_nmc(model, store: AnnotationStore, q: UntilQuery, s_f: int,
               tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Exact until probability at flower root s_f, with caching.

    A single solve prices every member of the flower, so all member values
    are cached under the query's fingerprint, not just the root's.
    """
    fp = formula_fingerprint(q)
    cached = store.prob_cache.get((fp, s_f))
    if cached is not None:
        return cached
    flower = get_flower(model, store, s_f)
    store.nmc_solves += 1
    solved = solve_until(flower.sub_model, q, tol=tol, max_iter=max_iter)
    if not solved.converged:
        raise SolverDivergenceError(f"flower solve at state {s_f} did not converge")
    for i, parent in enumerate(flower.to_parent):
        store.prob_cache[(fp, parent)] = float(solved.values[i])
    return store.prob_cache[(fp, s_f)]


def bouquet_estimate(model, q: UntilQuery, params: BouquetParams,
                     store: AnnotationStore,
                     fetch_counter: Optional[FetchCounter] = None) -> EstimationResult:
    """Run the hybrid estimator.

    Per visited state, in order: resolve on the verdict classes; stop with
    the cached exact value on an annotated flower; advance through annotated
    non-flowers; otherwise flip an r_prob coin to search, locating the
    flowerhead by binary search over the skipped-state list on a hit and
    bulk-annotating the list NotFlower on a miss. Traces that hit the step
    limit contribute 0. The estimate divides by params.samples regardless of
    truncations.
    """
    if q.bound is not None:
        raise ValueError("the hybrid engine handles unbounded queries only")
    if store.k != params.k:
        raise ValueError(f"store built with k={store.k}, run requests k={params.k}")
    t0 = time.perf_counter()
    codes = verdict_codes(model, q)
    streams = TraceStreams(params.seed)
    tally = VerdictTally()
    contributions = 0.0
    total_len = 0
    stalk_total = 0
    flower_status = store.flower  # local alias; mutated through store.mark only

    for i in range(params.samples):
        rng = streams.trace(i)
        s = model.initial
        visits = 0
        a: list[int] = []
        while True:
            visits += 1
            code = codes[s]
            if code == CODE_TRUE:
                contributions += 1.0
                tally.true += 1
                break
            if code == CODE_FALSE:
                tally.false += 1
                break
            status = flower_status[s]
            if status == FLOWER:
                contributions += _resolve_flower(model, store, q, s, params.k, fetch_counter)
                tally.flower += 1
                stalk_total += visits
                break
            if status == UNKNOWN:
                if rng.random() <= params.r_prob:
                    if is_flower(model, store, s, params.k):
                        head = find_flowerhead(model, store, a, s, params.k)
                        a = []
                        contributions += _resolve_flower(model, store, q, head,
                                                         params.k, fetch_counter)
                        tally.flower += 1
                        stalk_total += visits
                        break
                    # everything skipped so far shares s's non-flower fate
                    for x in a:
                        if flower_status[x] == UNKNOWN:
                            store.mark(x, NOTFLOWER)
                    a = []
                else:
                    a.append(s)
            # annotated NotFlower, freshly searched, or coin-skipped: advance
            if visits >= params.max_path_length:
                tally.inconclusive += 1
                break
            s = model.sample_successor(s, rng)
        total_len += visits

    wall = time.perf_counter() - t0
    return EstimationResult(
        estimate=contributions / params.samples,
        samples_used=params.samples,
        tally=tally,
        wall_time_s=wall,
        mean_trace_length=total_len / params.samples,
        mean_stalk_length=(stalk_total / tally.flower) if tally.flower else None,
        epsilon=params.epsilon,
        delta=params.delta,
    )


def _resolve_flower(model, store, q, s_f, k, fetch_counter) -> float:
    before = store.nmc_solves
    value = flower_nmc(model, store, q, s_f)
    if fetch_counter is not None and store.nmc_solves > before:
        fetch_counter.add(k)  # flat construction charge per flower built
    return value


def pre_annotate(model, k: int) -> AnnotationStore:
    """Annotate every state Flower/NotFlower in one bottom-up pass.

    Condenses the graph into strongly connected components and accumulates
    reach* sets in reverse topological order with early cutoff: a component
    whose set would exceed k is marked big and poisons its ancestors.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = model.n
    graph = csr_matrix(
        (np.ones(len(model.col), dtype=np.int8), model.col, model.row_ptr),
        shape=(n, n),
    )
    ncomp, labels = connected_components(graph, directed=True, connection="strong")

    members: list[list[int]] = [[] for _ in range(ncomp)]
    for s in range(n):
        members[labels[s]].append(s)

    src_comp = labels[np.repeat(np.arange(n), np.diff(model.row_ptr))]
    dst_comp = labels[model.col]
    cross = src_comp != dst_comp
    if np.any(cross):
        pairs = np.unique(np.stack([src_comp[cross], dst_comp[cross]], axis=1), axis=0)
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    comp_succ: list[list[int]] = [[] for _ in range(ncomp)]
    pred_count = np.zeros(ncomp, dtype=np.int64)
    for c_from, c_to in pairs:
        comp_succ[c_from].append(int(c_to))
        pred_count[c_to] += 1

    order = _reverse_topological(ncomp, comp_succ)

    store = AnnotationStore(n=n, k=k)
    reach_sets: dict[int, set[int]] = {}
    BIG = None
    for c in order:
        acc: Optional[set[int]] = set(members[c])
        if len(acc) > k:
            acc = BIG
        if acc is not None:
            for d in comp_succ[c]:
                child = reach_sets.get(d, BIG)
                if child is None:
                    acc = BIG
                    break
                acc.update(child)
                if len(acc) > k:
                    acc = BIG
                    break
        reach_sets[c] = acc
        if acc is None:
            for s in members[c]:
                store.mark(s, NOTFLOWER)
        else:
            size = len(acc)
            for s in members[c]:
                store.mark(s, FLOWER, reach=size)
        for d in comp_succ[c]:
            pred_count[d] -= 1
            if pred_count[d] == 0:
                del reach_sets[d]  # no remaining consumer; free the set
    return store


def _reverse_topological(ncomp: int, comp_succ: list[list[int]]) -> list[int]:
    """Order components so every successor precedes its predecessors."""
    out_remaining = np.array([len(s) for s in comp_succ], dtype=np.int64)
    preds: list[list[int]] = [[] for _ in range(ncomp)]
    for c, succs in enumerate(comp_succ):
        for d in succs:
            preds[d].append(c)
    ready = [c for c in range(ncomp) if out_remaining[c] == 0]
    order = []
    while ready:
        c = ready.pop()
        order.append(c)
        for p in preds[c]:
            out_remaining[p] -= 1
            if out_remaining[p] == 0:
                ready.append(p)
    if len(order) != ncomp:
        raise RuntimeError("condensation was not acyclic; component labeling is broken")
    return order
