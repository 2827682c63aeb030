"""Exact until checking: qualitative precomputation plus Gauss-Seidel solve.

The yes-set (right formula satisfied) is pinned to 1 and the prob0 set to 0;
the remaining states are iterated in ascending order until the largest
per-state change drops below tolerance. Bounded queries instead take exactly
`bound` synchronous backward steps from the same boundary sets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import Dtmc
from .formula import StateFormula, UntilQuery, sat_vector

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000


@dataclass
class ProbVector:
    """Per-state until probabilities with solver diagnostics."""

    values: np.ndarray
    converged: bool
    iterations: int


def sat_set(model: Dtmc, f: StateFormula) -> set[int]:
    """States satisfying a boolean state formula."""
    return set(int(s) for s in np.nonzero(sat_vector(model, f))[0])


def prob0(model: Dtmc, a_set: set[int], b_set: set[int]) -> set[int]:
    """States whose until probability is exactly zero.

    Computed as the complement of backward reachability from b_set through
    states in a_set | b_set.
    """
    allowed = np.zeros(model.n, dtype=bool)
    for s in a_set:
        allowed[s] = True
    for s in b_set:
        allowed[s] = True
    reached = np.zeros(model.n, dtype=bool)
    rev = _reverse_adjacency(model)
    frontier = list(b_set)
    for s in frontier:
        reached[s] = True
    while frontier:
        t = frontier.pop()
        for s in rev[t]:
            if allowed[s] and not reached[s]:
                reached[s] = True
                frontier.append(s)
    return set(int(s) for s in np.nonzero(~reached)[0])


def _reverse_adjacency(model: Dtmc) -> list[list[int]]:
    rev: list[list[int]] = [[] for _ in range(model.n)]
    col = model.col
    row_ptr = model.row_ptr
    for s in range(model.n):
        for j in range(row_ptr[s], row_ptr[s + 1]):
            rev[col[j]].append(s)
    return rev


def solve_until(
    model: Dtmc,
    q: UntilQuery,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ProbVector:
    """Solve an until query for every state.

    Unbounded: Gauss-Seidel sweeps in ascending state order on the states
    outside the boundary sets; non-convergence within max_iter is reported
    via a warning and converged=False rather than an exception. Bounded:
    exactly q.bound synchronous backward steps.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    yes = sat_vector(model, q.right)
    a_states = set(int(s) for s in np.nonzero(sat_vector(model, q.left))[0])
    b_states = set(int(s) for s in np.nonzero(yes)[0])
    no_set = prob0(model, a_states, b_states)
    no = np.zeros(model.n, dtype=bool)
    for s in no_set:
        no[s] = True

    x = np.zeros(model.n, dtype=np.float64)
    x[yes] = 1.0
    unknown = np.nonzero(~yes & ~no)[0]
    row_ptr, col, prob = model.row_ptr, model.col, model.prob

    if q.bound is not None:
        for _ in range(q.bound):
            prev = x.copy()
            for s in unknown:
                i0, i1 = row_ptr[s], row_ptr[s + 1]
                x[s] = prob[i0:i1] @ prev[col[i0:i1]]
        return ProbVector(values=x, converged=True, iterations=q.bound)

    if len(unknown) == 0:
        return ProbVector(values=x, converged=True, iterations=0)

    iterations = 0
    converged = False
    while iterations < max_iter:
        iterations += 1
        delta = 0.0
        for s in unknown:
            i0, i1 = row_ptr[s], row_ptr[s + 1]
            new = prob[i0:i1] @ x[col[i0:i1]]
            change = abs(new - x[s])
            if change > delta:
                delta = change
            x[s] = new
        if delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"until solve did not converge within {max_iter} sweeps")
    return ProbVector(values=x, converged=converged, iterations=iterations)


def nmc_single(
    model: Dtmc,
    q: UntilQuery,
    s: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """Exact until probability at a single state."""
    if not 0 <= s < model.n:
        raise ValueError(f"state {s} out of range [0,{model.n})")
    return float(solve_until(model, q, tol=tol, max_iter=max_iter).values[s])
