"""Labeled DTMC data model: construction, validation, successor access, sampling.

States are dense integer indices 0..n-1. Transition rows live in CSR-style
arrays sorted by (source, target); each row also carries a cumulative
probability array so successor sampling is a single inverse-CDF lookup.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

ROW_SUM_TOL = 1e-9


@dataclass(eq=False)
class Dtmc:
    """Finite labeled Markov chain with sparse transition rows.

    Rows are stored CSR-style: row s occupies ``col[row_ptr[s]:row_ptr[s+1]]``
    (targets, ascending) with matching ``prob`` entries. ``label_bits[s, j]``
    is True iff state s carries atomic proposition ``ap_names[j]``.
    Instances are immutable by convention after construction.
    """

    n: int
    initial: int
    row_ptr: np.ndarray
    col: np.ndarray
    prob: np.ndarray
    ap_names: list[str]
    label_bits: np.ndarray
    cum: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.cum is None:
            self.cum = _row_cumulative(self.row_ptr, self.prob)

    @classmethod
    def from_rows(
        cls,
        n: int,
        initial: int,
        rows: Sequence[Sequence[tuple[int, float]]],
        ap_names: Sequence[str] = (),
        labels: Optional[Sequence[Iterable[int]]] = None,
    ) -> "Dtmc":
        """Build a chain from per-state (target, probability) lists.

        Rows are sorted by target. Structural problems (bad row sums,
        duplicate targets, out-of-range indices) are NOT rejected here so
        that validate() can report them; engines must validate first.
        """
        counts = [len(r) for r in rows]
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        m = int(row_ptr[-1])
        col = np.empty(m, dtype=np.int64)
        prob = np.empty(m, dtype=np.float64)
        for s, row in enumerate(rows):
            ordered = sorted(row, key=lambda tp: tp[0])
            i0 = row_ptr[s]
            for j, (t, p) in enumerate(ordered):
                col[i0 + j] = t
                prob[i0 + j] = p
        bits = np.zeros((n, len(ap_names)), dtype=bool)
        if labels is not None:
            for s, aps in enumerate(labels):
                for j in aps:
                    bits[s, j] = True
        return cls(n=n, initial=initial, row_ptr=row_ptr, col=col, prob=prob,
                   ap_names=list(ap_names), label_bits=bits)

    def successors(self, s: int) -> list[tuple[int, float]]:
        """Row s by value, in ascending target order."""
        if not 0 <= s < self.n:
            raise ValueError(f"state {s} out of range [0,{self.n})")
        i0, i1 = self.row_ptr[s], self.row_ptr[s + 1]
        return [(int(t), float(p)) for t, p in zip(self.col[i0:i1], self.prob[i0:i1])]

    def sample_successor(self, s: int, rng: np.random.Generator) -> int:
        """Draw one successor of s via inverse CDF over the stored row order.

        Always consumes exactly one uniform from rng, even for
        single-successor rows, so streams advance predictably.
        """
        if not 0 <= s < self.n:
            raise ValueError(f"state {s} out of range [0,{self.n})")
        i0, i1 = self.row_ptr[s], self.row_ptr[s + 1]
        u = rng.random()
        j = int(np.searchsorted(self.cum[i0:i1], u, side="right"))
        if j >= i1 - i0:  # guard float noise at the top of the CDF
            j = i1 - i0 - 1
        return int(self.col[i0 + j])

    def density(self) -> float:
        """Edge count over n(n-1); self-loops count as edges."""
        if self.n < 2:
            raise ValueError("density undefined for chains with fewer than 2 states")
        return float(len(self.col)) / (self.n * (self.n - 1))

    def labels_of(self, s: int) -> frozenset[int]:
        return frozenset(int(j) for j in np.nonzero(self.label_bits[s])[0])

    def edge_count(self) -> int:
        return int(len(self.col))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dtmc):
            return NotImplemented
        return (
            self.n == other.n
            and self.initial == other.initial
            and self.ap_names == other.ap_names
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col, other.col)
            and np.array_equal(self.prob, other.prob)
            and np.array_equal(self.label_bits, other.label_bits)
        )


def _row_cumulative(row_ptr: np.ndarray, prob: np.ndarray) -> np.ndarray:
    """Per-row cumulative sums over a CSR value array, in one pass."""
    if len(prob) == 0:
        return np.empty(0, dtype=np.float64)
    running = np.cumsum(prob)
    row_base = np.concatenate(([0.0], running))[row_ptr[:-1]]
    lengths = np.diff(row_ptr)
    return running - np.repeat(row_base, lengths)


def validate(model: Dtmc) -> Optional[str]:
    """Check all chain invariants; return None if valid, else the first
    violation as a message naming the offending state."""
    if model.n <= 0:
        return "state count must be positive"
    if not 0 <= model.initial < model.n:
        return f"initial state {model.initial} out of range [0,{model.n})"
    for s in range(model.n):
        i0, i1 = model.row_ptr[s], model.row_ptr[s + 1]
        if i1 == i0:
            return f"empty row at state {s}"
        targets = model.col[i0:i1]
        probs = model.prob[i0:i1]
        if targets.min() < 0 or targets.max() >= model.n:
            bad = targets[(targets < 0) | (targets >= model.n)][0]
            return f"transition target {bad} out of range at state {s}"
        if len(np.unique(targets)) != len(targets):
            return f"duplicate transition target at state {s}"
        if np.any(probs <= 0.0) or np.any(probs > 1.0):
            return f"probability outside (0,1] at state {s}"
        total = float(probs.sum())
        if abs(total - 1.0) > ROW_SUM_TOL:
            return f"row-sum {total:.10g} at state {s}"
    a = len(model.ap_names)
    if model.label_bits.shape != (model.n, a):
        return "label matrix shape mismatch"
    return None


@dataclass
class Trace:
    """A finite path through a chain; truncated marks a walk stopped at the
    step limit rather than by a verdict."""

    states: list[int]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.states)


def trace_is_valid(model: Dtmc, trace: Trace) -> bool:
    """True iff consecutive states are joined by positive-probability edges."""
    for a, b in zip(trace.states, trace.states[1:]):
        if not any(t == b for t, _ in model.successors(a)):
            return False
    return True


class FetchCounter:
    """Counts successor-row retrievals for the I/O cost model.

    Engine walks fetch one row per successors()/sample_successor() call on
    an instrumented chain. Flower construction is charged a flat k by the
    hybrid engine; solves on extracted flowers touch raw arrays and are
    never counted (they happen "in RAM").
    """

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, k: int = 1) -> None:
        self.count += k


class InstrumentedDtmc:
    """Proxy over a Dtmc that bumps a FetchCounter on each row access."""

    def __init__(self, base: Dtmc, counter: FetchCounter):
        self.base = base
        self.counter = counter

    def successors(self, s: int) -> list[tuple[int, float]]:
        self.counter.add()
        return self.base.successors(s)

    def sample_successor(self, s: int, rng: np.random.Generator) -> int:
        self.counter.add()
        return self.base.sample_successor(s, rng)

    def __getattr__(self, name):
        return getattr(self.base, name)
