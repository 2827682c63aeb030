"""Probabilistic model checker for labeled discrete-time Markov chains.

Three engines for unbounded-until queries: exact numerical checking,
Chernoff-Hoeffding statistical sampling, and a hybrid that stops sample
traces at small reachability-closed sub-chains ("flowers") and resolves
them exactly, caching the per-state results for reuse across queries.
"""

from .model import Dtmc, FetchCounter, InstrumentedDtmc, Trace, validate
from .modelfile import ModelFormatError, model_fingerprint, parse_model, write_model
from .formula import (
    FormulaSyntaxError,
    TraceVerdict,
    UntilQuery,
    eval_state,
    eval_trace,
    formula_fingerprint,
    parse_formula,
)
from .nmc import ProbVector, nmc_single, prob0, sat_set, solve_until
from .smc import EstimationResult, SamplingPlan, estimate, required_samples, simulate_trace
from .bouquet import (
    AnnotationStore,
    BouquetParams,
    Flower,
    bouquet_estimate,
    bouquet_samples,
    default_k,
    find_flowerhead,
    flower_nmc,
    get_flower,
    is_flower,
    pre_annotate,
    reach_bounded,
)
from .store import AnnotationFileError, load_annotations, save_annotations

__version__ = "0.1.0"
