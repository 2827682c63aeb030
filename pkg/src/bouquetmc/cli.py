"""Command-line entry point: check, generate, annotate, and bench workflows.

Exit codes: 0 success, 2 user/input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .modelfile import ModelFormatError, model_fingerprint, parse_model
from .formula import FormulaSyntaxError, parse_formula, render_query
from .nmc import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_until
from .smc import DEFAULT_MAX_PATH_LENGTH, SamplingPlan, estimate, required_samples
from .bouquet import (
    AnnotationStore,
    BouquetParams,
    DEFAULT_R_PROB,
    SolverDivergenceError,
    bouquet_estimate,
    bouquet_samples,
    default_k,
    pre_annotate,
)
from .store import AnnotationFileError, load_annotations, save_annotations
from .bench import SuiteSpec, rows_to_csv, run_experiment

EXIT_OK = 0
EXIT_USER = 2
EXIT_NUMERIC = 3

_REPORT_KEYS = [
    "method", "model", "model_fingerprint", "formula", "estimate", "exact",
    "converged", "iterations", "samples", "epsilon", "delta", "seed", "k",
    "rprob", "max_path_length", "tally", "mean_trace_length",
    "mean_stalk_length", "flower", "wall_ms",
]


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ModelFormatError, FormulaSyntaxError, AnnotationFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bouquetmc",
        description="Probabilistic model checker for labeled DTMCs "
                    "(exact, statistical, and hybrid flower-based engines).")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="evaluate an until formula on a model")
    check.add_argument("--model", required=True, help="MODEL-format file")
    check.add_argument("--formula", required=True, help='e.g. "P=? [ a U b ]"')
    check.add_argument("--method", choices=["nmc", "smc", "bouquet"], default="bouquet")
    check.add_argument("--epsilon", type=float, default=None)
    check.add_argument("--delta", type=float, default=None)
    check.add_argument("--samples", type=int, default=None)
    check.add_argument("--max-path-length", type=int, default=None)
    check.add_argument("--seed", type=int, default=None)
    check.add_argument("--k", type=int, default=None)
    check.add_argument("--rprob", type=float, default=None)
    check.add_argument("--tol", type=float, default=None)
    check.add_argument("--max-iter", type=int, default=None)
    check.add_argument("--annotations", default=None,
                       help="annotation file: loaded if it exists, saved on exit")
    check.add_argument("--workers", type=int, default=_default_workers())
    check.add_argument("--json", action="store_true", dest="as_json")
    check.set_defaults(func=cmd_check)

    gen = sub.add_parser("generate", help="write a random sparse chain")
    gen.add_argument("--states", type=int, required=True)
    gen.add_argument("--density", type=float, required=True)
    gen.add_argument("--p-a", type=float, default=0.8)
    gen.add_argument("--p-b", type=float, default=0.05)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=cmd_generate)

    ann = sub.add_parser("annotate", help="fully pre-annotate a model's flower status")
    ann.add_argument("--model", required=True)
    ann.add_argument("--k", type=int, default=None,
                     help="flower threshold (default floor(sqrt(n)))")
    ann.add_argument("-o", "--output", required=True)
    ann.set_defaults(func=cmd_annotate)

    bench = sub.add_parser("bench", help="run an experiment suite, emit CSV")
    bench.add_argument("--suite", required=True)
    bench.add_argument("--config", default=None, help="key=value file with suite parameters")
    bench.add_argument("--sizes", default=None, help="comma-separated state counts")
    bench.add_argument("--densities", default=None, help="comma-separated densities")
    bench.add_argument("--epsilons", default=None, help="comma-separated accuracy targets")
    bench.add_argument("--states", type=int, default=None)
    bench.add_argument("--density", type=float, default=None)
    bench.add_argument("--epsilon", type=float, default=None)
    bench.add_argument("--delta", type=float, default=None)
    bench.add_argument("--replicates", type=int, default=None)
    bench.add_argument("--samples", type=int, default=None)
    bench.add_argument("--k", type=int, default=None)
    bench.add_argument("--rprob", type=float, default=None)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--max-path-length", type=int, default=None)
    bench.add_argument("--with-nmc", action="store_true", default=None)
    bench.add_argument("--smc-batches", type=int, default=None)
    bench.add_argument("--smc-batch-size", type=int, default=None)
    bench.add_argument("--large", action="store_true",
                       help="lift the density sweep to 1e5 states")
    bench.add_argument("-o", "--output", default=None, help="CSV path (default stdout)")
    bench.set_defaults(func=cmd_bench)

    return parser


def _default_workers() -> int:
    raw = os.environ.get("BOUQUETMC_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _warn_ignored(args, relevant: set[str]) -> None:
    flags = {
        "epsilon": args.epsilon, "delta": args.delta, "samples": args.samples,
        "max_path_length": args.max_path_length, "seed": args.seed, "k": args.k,
        "rprob": args.rprob, "tol": args.tol, "max_iter": args.max_iter,
        "annotations": args.annotations,
    }
    for name, value in flags.items():
        if value is not None and name not in relevant:
            print(f"warning: --{name.replace('_', '-')} is ignored for "
                  f"method {args.method}", file=sys.stderr)


def cmd_check(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fh:
        model = parse_model(fh.read())
    q = parse_formula(args.formula)

    report = {key: None for key in _REPORT_KEYS}
    report.update(method=args.method, model=args.model,
                  model_fingerprint=model_fingerprint(model),
                  formula=render_query(q))

    if args.method == "nmc":
        _warn_ignored(args, {"tol", "max_iter"})
        tol = args.tol if args.tol is not None else DEFAULT_TOL
        max_iter = args.max_iter if args.max_iter is not None else DEFAULT_MAX_ITER
        t0 = time.perf_counter()
        solved = solve_until(model, q, tol=tol, max_iter=max_iter)
        wall = (time.perf_counter() - t0) * 1e3
        value = float(solved.values[model.initial])
        report.update(estimate=value, exact=value, converged=solved.converged,
                      iterations=solved.iterations, wall_ms=wall)
        _emit(report, args.as_json)
        return EXIT_OK if solved.converged else EXIT_NUMERIC

    epsilon = args.epsilon if args.epsilon is not None else 0.05
    delta = args.delta if args.delta is not None else 0.05
    maxlen = args.max_path_length if args.max_path_length is not None else DEFAULT_MAX_PATH_LENGTH
    seed = args.seed if args.seed is not None else 0

    if args.method == "smc":
        _warn_ignored(args, {"epsilon", "delta", "samples", "max_path_length", "seed"})
        plan = SamplingPlan(epsilon=epsilon, delta=delta, samples=args.samples,
                            max_path_length=maxlen, seed=seed)
        res = estimate(model, q, plan, workers=args.workers)
        report.update(estimate=res.estimate, samples=res.samples_used,
                      epsilon=epsilon, delta=delta, seed=seed,
                      max_path_length=maxlen,
                      tally=_tally_dict(res.tally),
                      mean_trace_length=res.mean_trace_length,
                      wall_ms=res.wall_time_s * 1e3)
        _emit(report, args.as_json)
        return EXIT_OK

    _warn_ignored(args, {"epsilon", "delta", "samples", "max_path_length",
                         "seed", "k", "rprob", "annotations"})
    if args.workers > 1:
        print("warning: the hybrid engine runs single-worker (reference semantics)",
              file=sys.stderr)
    fingerprint = model_fingerprint(model)
    k = args.k if args.k is not None else default_k(model.n)
    store = None
    if args.annotations and os.path.exists(args.annotations):
        store = load_annotations(args.annotations, fingerprint, n=model.n,
                                 k=args.k)  # adopt the file's k when --k is absent
        k = store.k
    if store is None:
        store = AnnotationStore(n=model.n, k=k)
    rprob = args.rprob if args.rprob is not None else DEFAULT_R_PROB
    samples = args.samples if args.samples is not None else bouquet_samples(
        required_samples(epsilon, delta))
    params = BouquetParams(k=k, r_prob=rprob, epsilon=epsilon, delta=delta,
                           samples=samples, max_path_length=maxlen, seed=seed)
    try:
        res = bouquet_estimate(model, q, params, store)
    except SolverDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    report.update(estimate=res.estimate, samples=res.samples_used,
                  epsilon=epsilon, delta=delta, seed=seed, k=k, rprob=rprob,
                  max_path_length=maxlen,
                  tally=_tally_dict(res.tally),
                  mean_trace_length=res.mean_trace_length,
                  mean_stalk_length=res.mean_stalk_length,
                  flower={
                      "searches": store.reach_searches,
                      "solves": store.nmc_solves,
                      "annotated_flower": int((store.flower == 2).sum()),
                      "annotated_notflower": int((store.flower == 1).sum()),
                      "cached_probabilities": len(store.prob_cache),
                  },
                  wall_ms=res.wall_time_s * 1e3)
    if args.annotations:
        save_annotations(store, fingerprint, args.annotations)
    _emit(report, args.as_json)
    return EXIT_OK


def _tally_dict(tally) -> dict:
    return {"true": tally.true, "false": tally.false,
            "inconclusive": tally.inconclusive, "flower": tally.flower}


def _emit(report: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report, indent=2, sort_keys=True))
        return
    print(f"method:            {report['method']}")
    value = report["estimate"]
    label = "exact value" if report["method"] == "nmc" else "estimate"
    print(f"{label + ':':<19}{value}")
    if report["method"] == "nmc":
        print(f"converged:         {report['converged']} "
              f"({report['iterations']} iterations)")
    else:
        print(f"samples:           {report['samples']}")
        print(f"epsilon, delta:    {report['epsilon']}, {report['delta']}")
        print(f"mean trace length: {report['mean_trace_length']:.3f}")
        tally = report["tally"]
        print(f"tally:             true={tally['true']} false={tally['false']} "
              f"inconclusive={tally['inconclusive']} flower={tally['flower']}")
    if report["flower"] is not None:
        fl = report["flower"]
        print(f"flower stats:      searches={fl['searches']} solves={fl['solves']} "
              f"flower={fl['annotated_flower']} notflower={fl['annotated_notflower']}")
    print(f"wall time:         {report['wall_ms']:.2f} ms")


def cmd_generate(args) -> int:
    import hashlib

    from .bench import GeneratorConfig, generate_random_dtmc
    from .modelfile import canonical_text

    cfg = GeneratorConfig(n=args.states, rho=args.density, p_a=args.p_a,
                          p_b=args.p_b, seed=args.seed)
    model = generate_random_dtmc(cfg)
    text = canonical_text(model)  # one render serves both file and fingerprint
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(hashlib.sha256(text.encode("utf-8")).hexdigest())
    return EXIT_OK


def cmd_annotate(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fh:
        model = parse_model(fh.read())
    k = args.k if args.k is not None else default_k(model.n)
    store = pre_annotate(model, k)
    save_annotations(store, model_fingerprint(model), args.output)
    flowers = int((store.flower == 2).sum())
    print(f"annotated {model.n} states at k={k}: "
          f"{flowers} flower, {model.n - flowers} notflower")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = _suite_spec(args)
    rows = run_experiment(args.suite, spec)
    if args.output:
        rows_to_csv(rows, args.output)
        print(f"wrote {len(rows)} rows to {args.output}", file=sys.stderr)
    else:
        rows_to_csv(rows, sys.stdout)
    return EXIT_OK


def _suite_spec(args) -> SuiteSpec:
    spec = SuiteSpec()
    if args.config:
        _apply_config_file(spec, args.config)
    if args.sizes:
        spec.sizes = [int(x) for x in args.sizes.split(",")]
    if args.densities:
        spec.densities = [float(x) for x in args.densities.split(",")]
    if args.epsilons:
        spec.epsilons = [float(x) for x in args.epsilons.split(",")]
    for name in ("states", "density", "epsilon", "delta", "replicates", "samples",
                 "k", "rprob", "seed", "max_path_length", "with_nmc",
                 "smc_batches", "smc_batch_size"):
        value = getattr(args, name)
        if value is not None:
            setattr(spec, name, value)
    if args.large:
        spec.states = 100_000
    return spec


def _apply_config_file(spec: SuiteSpec, path: str) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"bad config line {line!r} (expected key=value)")
            key = key.strip()
            value = value.strip()
            if not hasattr(spec, key):
                raise ValueError(f"unknown suite parameter {key!r}")
            current = getattr(spec, key)
            if isinstance(current, bool):
                setattr(spec, key, value.lower() in ("1", "true", "yes"))
            elif isinstance(current, int):
                setattr(spec, key, int(value))
            elif isinstance(current, float):
                setattr(spec, key, float(value))
            elif isinstance(current, list):
                items = [x.strip() for x in value.split(",") if x.strip()]
                if current and isinstance(current[0], int):
                    setattr(spec, key, [int(x) for x in items])
                elif current and isinstance(current[0], float):
                    setattr(spec, key, [float(x) for x in items])
                else:
                    setattr(spec, key, items)
            else:
                setattr(spec, key, value)


if __name__ == "__main__":
    sys.exit(main())
