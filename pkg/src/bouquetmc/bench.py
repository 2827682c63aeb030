"""Random chain generation, experiment suites, fetch accounting, CSV rows.

Suites mirror the experiment families the engines are meant to be compared
under: wall time against model size, against repeated queries on one store,
against the accuracy target, against density, plus successor-fetch
accounting for the I/O savings model. Timing columns are machine-bound;
every other column is deterministic given the suite spec.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Optional, TextIO, Union

import numpy as np
from numpy.random import Generator, Philox

from .model import Dtmc, FetchCounter, InstrumentedDtmc
from .formula import UntilQuery, parse_formula, render_query
from .nmc import nmc_single
from .smc import SamplingPlan, estimate, required_samples
from .bouquet import (
    AnnotationStore,
    BouquetParams,
    bouquet_estimate,
    bouquet_samples,
    default_k,
    pre_annotate,
)

SUITES = ("size_sweep", "density_sweep", "accuracy_sweep", "repeat_query", "io_count")

CSV_COLUMNS = [
    "suite", "n", "rho", "epsilon", "delta", "k", "rprob", "seed",
    "method", "annotation_mode", "estimate", "exact", "abs_error",
    "samples", "wall_ms", "mean_trace_len", "flower_resolved", "fetches",
    "query_index", "formula", "mean_stalk_len", "predicted_savings",
    "batch_index", "error",
]

_GENERATOR_STREAM = 2**63  # keeps generator draws disjoint from trace substreams


@dataclass
class GeneratorConfig:
    """Random sparse chain: every state gets round(rho*(n-1)) distinct
    uniform successors with normalized uniform weights; labels a and b are
    assigned independently per state."""

    n: int
    rho: float
    p_a: float = 0.8
    p_b: float = 0.05
    seed: int = 0

    def out_degree(self) -> int:
        return round(self.rho * (self.n - 1))

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 states, got {self.n}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"density must be in (0,1), got {self.rho}")
        if self.out_degree() < 1:
            raise ValueError(
                f"density {self.rho} gives zero out-degree at n={self.n}")
        for name, p in (("p_a", self.p_a), ("p_b", self.p_b)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")


def generate_random_dtmc(cfg: GeneratorConfig) -> Dtmc:
    """Deterministic per seed; density lands within 2% relative of cfg.rho
    for n >= 100 because the out-degree is uniform across states."""
    rng = Generator(Philox(key=np.array(
        [cfg.seed & 0xFFFFFFFFFFFFFFFF, _GENERATOR_STREAM], dtype=np.uint64)))
    n, d = cfg.n, cfg.out_degree()
    # rows are built straight into CSR arrays; per-tuple rows would dominate
    # generation time at benchmark sizes
    col = np.empty(n * d, dtype=np.int64)
    prob = np.empty(n * d, dtype=np.float64)
    for s in range(n):
        lo = s * d
        col[lo:lo + d] = np.sort(rng.choice(n, size=d, replace=False))
        weights = 1.0 - rng.random(d)  # (0,1] draws keep probabilities positive
        prob[lo:lo + d] = weights / weights.sum()
    row_ptr = np.arange(0, n * d + 1, d, dtype=np.int64)
    a_bits = rng.random(n) < cfg.p_a
    b_bits = rng.random(n) < cfg.p_b
    label_bits = np.stack([a_bits, b_bits], axis=1)
    return Dtmc(n=n, initial=0, row_ptr=row_ptr, col=col, prob=prob,
                ap_names=["a", "b"], label_bits=label_bits)


def generate_clustered_dtmc(
    n: int,
    cluster_size: int,
    transient_fraction: float = 0.5,
    out_degree: int = 8,
    p_b_transient: float = 0.0,
    p_b_cluster: float = 0.0,
    seed: int = 0,
) -> Dtmc:
    """Two-tier chain for flower-rich experiments.

    A transient region wires uniformly into everything; the rest of the
    state space is partitioned into reachability-closed clusters of
    cluster_size states. Every cluster state is a flower root for any
    k >= cluster_size, while transient states are not. All states carry a;
    b is sprinkled per region.
    """
    if cluster_size < 1 or n < 2 * cluster_size:
        raise ValueError("need n >= 2*cluster_size and cluster_size >= 1")
    rng = Generator(Philox(key=np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, _GENERATOR_STREAM + 1], dtype=np.uint64)))
    blocks = max(1, round(n * (1.0 - transient_fraction)) // cluster_size)
    t = n - blocks * cluster_size
    if t < 1:
        blocks -= 1
        t = n - blocks * cluster_size
    rows: list[list[tuple[int, float]]] = []
    for s in range(t):
        d = min(out_degree, n - 1)
        targets = np.sort(rng.choice(n, size=d, replace=False))
        weights = 1.0 - rng.random(d)
        weights /= weights.sum()
        rows.append(list(zip(targets.tolist(), weights.tolist())))
    for b in range(blocks):
        lo = t + b * cluster_size
        for s in range(lo, lo + cluster_size):
            if cluster_size == 1:
                rows.append([(s, 1.0)])
                continue
            d = min(2, cluster_size)
            local = np.sort(rng.choice(cluster_size, size=d, replace=False)) + lo
            weights = 1.0 - rng.random(d)
            weights /= weights.sum()
            rows.append(list(zip(local.tolist(), weights.tolist())))
    b_bits = np.concatenate([
        rng.random(t) < p_b_transient,
        rng.random(n - t) < p_b_cluster,
    ])
    labels = [{0} | ({1} if b_bits[s] else set()) for s in range(n)]
    return Dtmc.from_rows(n, 0, rows, ["a", "b"], labels)


@dataclass
class IoCostReport:
    """Measured and modeled successor-fetch accounting for one run pair."""

    total_fetches: int
    n_samples: int
    flower_resolved: int
    mean_trace_length: float
    mean_stalk_length: float
    k: int
    predicted_savings: float


def io_savings_predicted(n_samples: int, flower_resolved: int, l_avg: float,
                         l_stalk_avg: float, k: int) -> float:
    """Modeled fetch savings: flower_resolved*(l_avg - l_stalk_avg) - k."""
    if flower_resolved > n_samples:
        raise ValueError("flower-resolved count cannot exceed the sample count")
    return flower_resolved * (l_avg - l_stalk_avg) - k


@dataclass
class SuiteSpec:
    """Parameters for run_experiment; unused fields are ignored per suite."""

    sizes: list[int] = field(default_factory=lambda: [1000, 10000])
    states: int = 2000
    density: float = 0.05
    densities: list[float] = field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1])
    epsilon: float = 0.05
    delta: float = 0.05
    epsilons: list[float] = field(default_factory=lambda: [0.1, 0.05, 0.02])
    replicates: int = 5
    samples: Optional[int] = None
    k: Optional[int] = None
    rprob: float = 0.01
    max_path_length: int = 10_000
    seed: int = 0
    p_a: float = 0.8
    p_b: float = 0.05
    # three distinct formulas with comparable per-trace cost, so the
    # repeat-query trend isolates annotation reuse rather than formula shape
    formula: str = "P=? [ a U b ]"
    formulas: list[str] = field(default_factory=lambda: [
        "P=? [ a U b ]",
        "P=? [ (a | b) U b ]",
        "P=? [ a & !b U b ]",
    ])
    with_nmc: bool = False
    smc_batches: Optional[int] = None
    smc_batch_size: Optional[int] = None
    cluster_size: Optional[int] = None
    transient_fraction: float = 0.5
    io_max_path_length: int = 300
    io_p_b: float = 0.003


def _new_row(suite: str, **values) -> dict:
    row = {c: None for c in CSV_COLUMNS}
    row["suite"] = suite
    row.update(values)
    return row


def _smc_row(row: dict, model, q: UntilQuery, plan: SamplingPlan,
             counter: Optional[FetchCounter] = None) -> dict:
    target = InstrumentedDtmc(model, counter) if counter is not None else model
    res = estimate(target, q, plan)
    row.update(method="smc", estimate=res.estimate, samples=res.samples_used,
               wall_ms=res.wall_time_s * 1e3, mean_trace_len=res.mean_trace_length,
               flower_resolved=0, epsilon=plan.epsilon, delta=plan.delta)
    if counter is not None:
        row["fetches"] = counter.count
    return row


def _bouquet_row(row: dict, model, q: UntilQuery, params: BouquetParams,
                 store: AnnotationStore, counter: Optional[FetchCounter] = None) -> dict:
    target = InstrumentedDtmc(model, counter) if counter is not None else model
    res = bouquet_estimate(target, q, params, store, fetch_counter=counter)
    row.update(method="bouquet", estimate=res.estimate, samples=res.samples_used,
               wall_ms=res.wall_time_s * 1e3, mean_trace_len=res.mean_trace_length,
               flower_resolved=res.tally.flower, mean_stalk_len=res.mean_stalk_length,
               epsilon=params.epsilon, delta=params.delta)
    if counter is not None:
        row["fetches"] = counter.count
    return row


def _attach_exact(rows: list[dict], exact: Optional[float]) -> None:
    if exact is None:
        return
    for row in rows:
        if row["estimate"] is not None:
            row["exact"] = exact
            row["abs_error"] = abs(row["estimate"] - exact)


def _catching(fn, suite, **ids):
    try:
        return fn()
    except Exception as exc:  # failed runs become rows, not crashes
        return [_new_row(suite, error=f"{type(exc).__name__}: {exc}", **ids)]


def _methods_for_config(suite: str, model: Dtmc, q: UntilQuery, spec: SuiteSpec,
                        n: int, rho: float, epsilon: float, rep_seed: int,
                        fly_store: Optional[AnnotationStore] = None,
                        query_index: Optional[int] = None) -> list[dict]:
    """Run the standard method set on one (model, query) configuration."""
    k = spec.k if spec.k is not None else default_k(n)
    n_s = spec.samples if spec.samples is not None else required_samples(epsilon, spec.delta)
    n_b = bouquet_samples(n_s)
    ids = dict(n=n, rho=rho, epsilon=epsilon, delta=spec.delta, k=k,
               rprob=spec.rprob, seed=rep_seed, formula=render_query(q),
               query_index=query_index)
    rows: list[dict] = []

    if suite == "repeat_query":
        params = BouquetParams(k=k, r_prob=spec.rprob, epsilon=epsilon, delta=spec.delta,
                               samples=n_b, max_path_length=spec.max_path_length, seed=rep_seed)
        rows.append(_bouquet_row(_new_row(suite, annotation_mode="on_the_fly", **ids),
                                 model, q, params, fly_store))
        return rows

    plan = SamplingPlan(epsilon=epsilon, delta=spec.delta, samples=n_s,
                        max_path_length=spec.max_path_length, seed=rep_seed)
    if spec.smc_batches and spec.smc_batch_size:
        pooled_hits = 0.0
        for b in range(spec.smc_batches):
            bplan = SamplingPlan(epsilon=epsilon, delta=spec.delta,
                                 samples=spec.smc_batch_size,
                                 max_path_length=spec.max_path_length,
                                 seed=rep_seed + 7919 * (b + 1))
            brow = _smc_row(_new_row(suite, annotation_mode="batch", batch_index=b, **ids),
                            model, q, bplan)
            pooled_hits += brow["estimate"] * spec.smc_batch_size
            rows.append(brow)
        pooled = _new_row(suite, method="smc", annotation_mode="batch",
                          batch_index="pooled", **ids)
        pooled.update(estimate=pooled_hits / (spec.smc_batches * spec.smc_batch_size),
                      samples=spec.smc_batches * spec.smc_batch_size)
        rows.append(pooled)
    else:
        rows.append(_smc_row(_new_row(suite, annotation_mode="none", **ids), model, q, plan))

    pre_store = pre_annotate(model, k)
    params = BouquetParams(k=k, r_prob=spec.rprob, epsilon=epsilon, delta=spec.delta,
                           samples=n_b, max_path_length=spec.max_path_length, seed=rep_seed)
    rows.append(_bouquet_row(_new_row(suite, annotation_mode="pre", **ids),
                             model, q, params, pre_store))

    fresh = AnnotationStore(n=model.n, k=k)
    rows.append(_bouquet_row(_new_row(suite, annotation_mode="on_the_fly", **ids),
                             model, q, params, fresh))

    exact = None
    if spec.with_nmc:
        t0 = time.perf_counter()
        exact = nmc_single(model, q, model.initial)
        wall = (time.perf_counter() - t0) * 1e3
        nrow = _new_row(suite, method="nmc", annotation_mode="none", **ids)
        nrow.update(estimate=exact, exact=exact, abs_error=0.0, wall_ms=wall)
        rows.append(nrow)
    _attach_exact(rows, exact)
    return rows


def run_experiment(suite: str, spec: SuiteSpec) -> list[dict]:
    """Run one suite; returns one row dict per engine run (see CSV_COLUMNS)."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; valid suites: {', '.join(SUITES)}")
    q = parse_formula(spec.formula)
    rows: list[dict] = []

    if suite == "size_sweep":
        for n in spec.sizes:
            for rep in range(spec.replicates):
                rep_seed = spec.seed + rep
                cfg = GeneratorConfig(n=n, rho=spec.density, p_a=spec.p_a,
                                      p_b=spec.p_b, seed=rep_seed)
                model = generate_random_dtmc(cfg)
                rows.extend(_catching(
                    lambda: _methods_for_config(suite, model, q, spec, n,
                                                spec.density, spec.epsilon, rep_seed),
                    suite, n=n, rho=spec.density, seed=rep_seed))
        return rows

    if suite == "density_sweep":
        for rho in spec.densities:
            for rep in range(spec.replicates):
                rep_seed = spec.seed + rep
                cfg = GeneratorConfig(n=spec.states, rho=rho, p_a=spec.p_a,
                                      p_b=spec.p_b, seed=rep_seed)
                model = generate_random_dtmc(cfg)
                rows.extend(_catching(
                    lambda: _methods_for_config(suite, model, q, spec, spec.states,
                                                rho, spec.epsilon, rep_seed),
                    suite, n=spec.states, rho=rho, seed=rep_seed))
        return rows

    if suite == "accuracy_sweep":
        for eps in spec.epsilons:
            for rep in range(spec.replicates):
                rep_seed = spec.seed + rep
                cfg = GeneratorConfig(n=spec.states, rho=spec.density, p_a=spec.p_a,
                                      p_b=spec.p_b, seed=rep_seed)
                model = generate_random_dtmc(cfg)
                rows.extend(_catching(
                    lambda: _methods_for_config(suite, model, q, spec, spec.states,
                                                spec.density, eps, rep_seed),
                    suite, n=spec.states, rho=spec.density, seed=rep_seed))
        return rows

    if suite == "repeat_query":
        queries = [parse_formula(f) for f in spec.formulas]
        k = spec.k if spec.k is not None else default_k(spec.states)
        for rep in range(spec.replicates):
            rep_seed = spec.seed + rep
            cfg = GeneratorConfig(n=spec.states, rho=spec.density, p_a=spec.p_a,
                                  p_b=spec.p_b, seed=rep_seed)
            model = generate_random_dtmc(cfg)
            shared = AnnotationStore(n=model.n, k=k)
            for qi, query in enumerate(queries):
                rows.extend(_catching(
                    lambda: _methods_for_config(suite, model, query, spec, spec.states,
                                                spec.density, spec.epsilon, rep_seed,
                                                fly_store=shared, query_index=qi),
                    suite, n=spec.states, rho=spec.density, seed=rep_seed,
                    query_index=qi))
        return rows

    # io_count: same sample count for both engines, fully pre-annotated chain,
    # warmed probability cache so every flower hit in the measured run is
    # cache-only and construction charges never appear.
    cluster = spec.cluster_size if spec.cluster_size is not None else max(2, default_k(spec.states) // 2)
    for rep in range(spec.replicates):
        rep_seed = spec.seed + rep
        model = generate_clustered_dtmc(
            spec.states, cluster, transient_fraction=spec.transient_fraction,
            p_b_transient=spec.io_p_b, seed=rep_seed)
        rows.extend(_catching(
            lambda: _io_rows(suite, model, q, spec, rep_seed, cluster),
            suite, n=spec.states, seed=rep_seed))
    return rows


def _io_rows(suite: str, model: Dtmc, q: UntilQuery, spec: SuiteSpec,
             rep_seed: int, cluster: int) -> list[dict]:
    n = model.n
    k = spec.k if spec.k is not None else default_k(n)
    n_samples = spec.samples if spec.samples is not None else required_samples(
        spec.epsilon, spec.delta)
    rho = model.density()
    ids = dict(n=n, rho=rho, epsilon=spec.epsilon, delta=spec.delta, k=k,
               rprob=spec.rprob, seed=rep_seed, formula=render_query(q))

    store = pre_annotate(model, k)
    params = BouquetParams(k=k, r_prob=spec.rprob, epsilon=spec.epsilon, delta=spec.delta,
                           samples=n_samples, max_path_length=spec.io_max_path_length,
                           seed=rep_seed)
    bouquet_estimate(model, q, params, store)  # warm the probability cache

    smc_counter = FetchCounter()
    plan = SamplingPlan(epsilon=spec.epsilon, delta=spec.delta, samples=n_samples,
                        max_path_length=spec.io_max_path_length, seed=rep_seed)
    smc_row = _smc_row(_new_row(suite, annotation_mode="none", **ids),
                       model, q, plan, counter=smc_counter)

    bq_counter = FetchCounter()
    solves_before = store.nmc_solves
    bq_row = _bouquet_row(_new_row(suite, annotation_mode="pre", **ids),
                          model, q, params, store, counter=bq_counter)
    if store.nmc_solves != solves_before:
        bq_row["error"] = "measured run was not cache-only"

    n_flower = bq_row["flower_resolved"]
    l_avg = smc_row["mean_trace_len"]
    l_stalk = bq_row["mean_stalk_len"] if bq_row["mean_stalk_len"] is not None else l_avg
    bq_row["predicted_savings"] = io_savings_predicted(n_samples, n_flower,
                                                       l_avg, l_stalk, k)
    return [smc_row, bq_row]


def rows_to_csv(rows: list[dict], sink: Union[str, TextIO]) -> None:
    """Serialize rows with the fixed header; None renders as an empty cell."""
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    def write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in CSV_COLUMNS])

    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write(fh)
    else:
        write(sink)
