"""Estimation-based statistical checking: sample sizing, trace walks, p-hat.

Sample sizing follows the Chernoff-Hoeffding bound N >= ln(2/delta)/(2 eps^2).
Reproducibility: every trace draws from its own Philox counter-based
substream keyed by (seed, trace index), so results are identical no matter
how traces are scheduled or partitioned across workers.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.random import Generator, Philox

from .model import Dtmc
from .formula import TraceVerdict, UntilQuery, sat_vector

DEFAULT_MAX_PATH_LENGTH = 10_000

# verdict codes precomputed per (model, query) so walks resolve in O(1)
CODE_NONE, CODE_TRUE, CODE_FALSE = 0, 1, 2


def required_samples(epsilon: float, delta: float) -> int:
    """Smallest N with N >= ln(2/delta) / (2 epsilon^2)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0,1), got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0,1), got {delta}")
    return math.ceil(math.log(2.0 / delta) / (2.0 * epsilon * epsilon))


@dataclass
class SamplingPlan:
    """Parameters of one estimation run; samples defaults to the
    Chernoff-Hoeffding requirement for (epsilon, delta)."""

    epsilon: float = 0.05
    delta: float = 0.05
    max_path_length: int = DEFAULT_MAX_PATH_LENGTH
    samples: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.samples is None:
            self.samples = required_samples(self.epsilon, self.delta)
        if self.samples < 1:
            raise ValueError(f"samples must be positive, got {self.samples}")
        if self.max_path_length < 1:
            raise ValueError(f"max_path_length must be positive, got {self.max_path_length}")


@dataclass
class VerdictTally:
    true: int = 0
    false: int = 0
    inconclusive: int = 0
    flower: int = 0

    def total(self) -> int:
        return self.true + self.false + self.inconclusive + self.flower


@dataclass
class EstimationResult:
    """Estimate plus per-trace accounting for one run."""

    estimate: float
    samples_used: int
    tally: VerdictTally
    wall_time_s: float
    mean_trace_length: float
    mean_stalk_length: Optional[float] = None
    epsilon: Optional[float] = None
    delta: Optional[float] = None


class TraceStreams:
    """Per-trace Philox substreams keyed by (seed, trace index).

    Reuses one bit generator and rewrites its counter/key state per trace,
    which is bit-identical to constructing Generator(Philox(key=[seed, i]))
    fresh but several times faster.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._bitgen = Philox(key=np.array([self.seed, 0], dtype=np.uint64))
        self.generator = Generator(self._bitgen)

    def trace(self, index: int) -> Generator:
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.zeros(4, dtype=np.uint64),
                "key": np.array([self.seed, index], dtype=np.uint64),
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self.generator


def verdict_codes(model: Dtmc, q: UntilQuery) -> np.ndarray:
    """Per-state resolution codes: TRUE where the right formula holds (checked
    first), FALSE where neither side holds, NONE elsewhere."""
    sat2 = sat_vector(model, q.right)
    sat1 = sat_vector(model, q.left)
    codes = np.zeros(model.n, dtype=np.int8)
    codes[~sat1 & ~sat2] = CODE_FALSE
    codes[sat2] = CODE_TRUE
    return codes


def walk_trace(model, codes: np.ndarray, max_path_length: int,
               rng: Generator, bound: Optional[int] = None) -> tuple[TraceVerdict, int]:
    """Walk one trace from the initial state; returns (verdict, states visited)."""
    s = model.initial
    visits = 0
    while True:
        visits += 1
        code = codes[s]
        if code == CODE_TRUE:
            return TraceVerdict.TRUE, visits
        if code == CODE_FALSE:
            return TraceVerdict.FALSE, visits
        if bound is not None and visits - 1 == bound:
            return TraceVerdict.FALSE, visits
        if visits >= max_path_length:
            return TraceVerdict.INCONCLUSIVE, visits
        s = model.sample_successor(s, rng)


def simulate_trace(model, q: UntilQuery, max_path_length: int,
                   rng: Generator) -> tuple[TraceVerdict, int]:
    """Simulate one trace, checking the verdict incrementally at each state."""
    return walk_trace(model, verdict_codes(model, q), max_path_length, rng, bound=q.bound)


def estimate(model, q: UntilQuery, plan: SamplingPlan, workers: int = 1) -> EstimationResult:
    """Run plan.samples independent traces; inconclusive counts as false.

    With workers > 1 traces are partitioned over processes; per-trace
    substreams make the result identical to the single-worker run.
    """
    t0 = time.perf_counter()
    codes = verdict_codes(model, q)
    if workers > 1:
        hits, tally, total_len = _estimate_parallel(model, codes, plan, q.bound, workers)
    else:
        hits, tally, total_len = _run_traces(model, codes, plan, q.bound, 0, plan.samples)
    wall = time.perf_counter() - t0
    return EstimationResult(
        estimate=hits / plan.samples,
        samples_used=plan.samples,
        tally=tally,
        wall_time_s=wall,
        mean_trace_length=total_len / plan.samples,
        epsilon=plan.epsilon,
        delta=plan.delta,
    )


def _run_traces(model, codes, plan: SamplingPlan, bound: Optional[int], lo: int, hi: int):
    streams = TraceStreams(plan.seed)
    tally = VerdictTally()
    hits = 0
    total_len = 0
    for i in range(lo, hi):
        rng = streams.trace(i)
        verdict, length = walk_trace(model, codes, plan.max_path_length, rng, bound)
        total_len += length
        if verdict is TraceVerdict.TRUE:
            hits += 1
            tally.true += 1
        elif verdict is TraceVerdict.FALSE:
            tally.false += 1
        else:
            tally.inconclusive += 1
    return hits, tally, total_len


_POOL_MODEL = None


def _pool_init(model):
    global _POOL_MODEL
    _POOL_MODEL = model


def _pool_run(args):
    codes, plan, bound, lo, hi = args
    return _run_traces(_POOL_MODEL, codes, plan, bound, lo, hi)


def _estimate_parallel(model, codes, plan: SamplingPlan, bound, workers: int):
    base = getattr(model, "base", model)  # fetch counters cannot cross processes
    chunk = math.ceil(plan.samples / workers)
    spans = [(codes, plan, bound, lo, min(lo + chunk, plan.samples))
             for lo in range(0, plan.samples, chunk)]
    hits, tally, total_len = 0, VerdictTally(), 0
    with ProcessPoolExecutor(max_workers=workers, initializer=_pool_init,
                             initargs=(base,)) as pool:
        for h, t, l in pool.map(_pool_run, spans):
            hits += h
            total_len += l
            tally.true += t.true
            tally.false += t.false
            tally.inconclusive += t.inconclusive
    return hits, tally, total_len
