"""PCTL fragment: `P=? [ SF U SF ]` with optional step bound, plus evaluation.

State formulas are boolean combinations of atomic propositions. Precedence:
`!` binds tightest, then `&`, then `|`. Atomic propositions resolve against
a chain's ap_names at evaluation time, never at parse time.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .model import Dtmc, Trace


class FormulaSyntaxError(ValueError):
    def __init__(self, position: int, message: str):
        super().__init__(f"position {position}: {message}")
        self.position = position
        self.message = message


@dataclass(frozen=True)
class Ap:
    name: str


@dataclass(frozen=True)
class Lit:
    value: bool


@dataclass(frozen=True)
class Not:
    child: "StateFormula"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Or:
    left: "StateFormula"
    right: "StateFormula"


StateFormula = Union[Ap, Lit, Not, And, Or]


@dataclass(frozen=True)
class UntilQuery:
    """Until path formula; bound=None means unbounded."""

    left: StateFormula
    right: StateFormula
    bound: Optional[int] = None

    def __post_init__(self):
        if self.bound is not None and self.bound < 0:
            raise ValueError(f"step bound must be >= 0, got {self.bound}")


class TraceVerdict(Enum):
    TRUE = "true"
    FALSE = "false"
    INCONCLUSIVE = "inconclusive"


_TOKEN_RE = re.compile(r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
                       r"|(?P<le><=)|(?P<sym>[()!&|\[\]=?]))")
_RESERVED = {"true", "false", "U", "P"}


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items: list[tuple[str, str, int]] = []  # (kind, value, position)
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                rest = text[pos:].lstrip()
                if not rest:
                    break
                at = len(text) - len(rest)
                raise FormulaSyntaxError(at, f"unexpected character {rest[0]!r}")
            pos = m.end()
            for kind in ("int", "ident", "le", "sym"):
                val = m.group(kind)
                if val is not None:
                    self.items.append((kind, val, m.start(kind)))
                    break
        self.i = 0

    def peek(self) -> Optional[tuple[str, str, int]]:
        return self.items[self.i] if self.i < len(self.items) else None

    def next(self, expect: str) -> tuple[str, str, int]:
        item = self.peek()
        if item is None:
            raise FormulaSyntaxError(len(self.text), f"unexpected end of formula, expected {expect}")
        self.i += 1
        return item

    def expect_sym(self, sym: str) -> None:
        kind, val, at = self.next(repr(sym))
        if val != sym:
            raise FormulaSyntaxError(at, f"expected {sym!r}, got {val!r}")


def parse_formula(text: str) -> UntilQuery:
    """Parse `P=? [ SF U SF ]` or `P=? [ SF U<=INT SF ]`.

    Whitespace-insensitive. Rejects nested `P` operators as unsupported.
    """
    toks = _Tokens(text)
    kind, val, at = toks.next("'P'")
    if val != "P":
        raise FormulaSyntaxError(at, f"formula must start with 'P=?', got {val!r}")
    toks.expect_sym("=")
    toks.expect_sym("?")
    toks.expect_sym("[")
    left = _parse_or(toks)
    kind, val, at = toks.next("'U'")
    if val != "U":
        raise FormulaSyntaxError(at, f"expected 'U', got {val!r}")
    bound = None
    item = toks.peek()
    if item is not None and item[1] == "<=":
        toks.next("'<='")
        kind, val, at = toks.next("an integer bound")
        if kind != "int":
            raise FormulaSyntaxError(at, f"expected integer bound after 'U<=', got {val!r}")
        bound = int(val)
    right = _parse_or(toks)
    toks.expect_sym("]")
    trailing = toks.peek()
    if trailing is not None:
        raise FormulaSyntaxError(trailing[2], f"trailing input {trailing[1]!r}")
    return UntilQuery(left, right, bound)


def _parse_or(toks: _Tokens) -> StateFormula:
    node = _parse_and(toks)
    while True:
        item = toks.peek()
        if item is None or item[1] != "|":
            return node
        toks.next("'|'")
        node = Or(node, _parse_and(toks))


def _parse_and(toks: _Tokens) -> StateFormula:
    node = _parse_unary(toks)
    while True:
        item = toks.peek()
        if item is None or item[1] != "&":
            return node
        toks.next("'&'")
        node = And(node, _parse_unary(toks))


def _parse_unary(toks: _Tokens) -> StateFormula:
    kind, val, at = toks.next("a state formula")
    if val == "!":
        return Not(_parse_unary(toks))
    if val == "(":
        inner = _parse_or(toks)
        toks.expect_sym(")")
        return inner
    if kind == "ident":
        if val == "true":
            return Lit(True)
        if val == "false":
            return Lit(False)
        if val == "P":
            nxt = toks.peek()
            if nxt is not None and nxt[1] == "=":
                raise FormulaSyntaxError(at, "nested 'P' operators are unsupported")
            raise FormulaSyntaxError(at, "'P' is reserved and cannot name a proposition")
        if val == "U":
            raise FormulaSyntaxError(at, "'U' is reserved and cannot name a proposition")
        return Ap(val)
    raise FormulaSyntaxError(at, f"expected a state formula, got {val!r}")


def render(f: StateFormula) -> str:
    """Canonical fully-parenthesized rendering of a state formula."""
    if isinstance(f, Ap):
        return f.name
    if isinstance(f, Lit):
        return "true" if f.value else "false"
    if isinstance(f, Not):
        return f"!{render(f.child)}"
    if isinstance(f, And):
        return f"({render(f.left)} & {render(f.right)})"
    if isinstance(f, Or):
        return f"({render(f.left)} | {render(f.right)})"
    raise TypeError(f"not a state formula: {f!r}")


def render_query(q: UntilQuery) -> str:
    u = "U" if q.bound is None else f"U<={q.bound}"
    return f"P=? [ {render(q.left)} {u} {render(q.right)} ]"


def formula_fingerprint(q: UntilQuery) -> str:
    """sha256 hex of the canonical rendering; keys the per-formula prob cache."""
    return hashlib.sha256(render_query(q).encode("utf-8")).hexdigest()


def _ap_column(model: Dtmc, name: str) -> int:
    try:
        return model.ap_names.index(name)
    except ValueError:
        raise ValueError(f"unknown atomic proposition {name!r}") from None


def eval_state(model: Dtmc, f: StateFormula, s: int) -> bool:
    """Boolean semantics of f over the label set of state s."""
    if not 0 <= s < model.n:
        raise ValueError(f"state {s} out of range [0,{model.n})")
    if isinstance(f, Ap):
        return bool(model.label_bits[s, _ap_column(model, f.name)])
    if isinstance(f, Lit):
        return f.value
    if isinstance(f, Not):
        return not eval_state(model, f.child, s)
    if isinstance(f, And):
        return eval_state(model, f.left, s) and eval_state(model, f.right, s)
    if isinstance(f, Or):
        return eval_state(model, f.left, s) or eval_state(model, f.right, s)
    raise TypeError(f"not a state formula: {f!r}")


def sat_vector(model: Dtmc, f: StateFormula) -> np.ndarray:
    """Boolean satisfaction vector over all states (vectorized eval_state)."""
    if isinstance(f, Ap):
        return model.label_bits[:, _ap_column(model, f.name)].copy()
    if isinstance(f, Lit):
        return np.full(model.n, f.value, dtype=bool)
    if isinstance(f, Not):
        return ~sat_vector(model, f.child)
    if isinstance(f, And):
        return sat_vector(model, f.left) & sat_vector(model, f.right)
    if isinstance(f, Or):
        return sat_vector(model, f.left) | sat_vector(model, f.right)
    raise TypeError(f"not a state formula: {f!r}")


def eval_trace(model: Dtmc, q: UntilQuery, trace: Trace) -> TraceVerdict:
    """Until semantics on a finite trace.

    TRUE if some position i (i <= bound when bounded) satisfies the right
    formula with the left holding strictly before; FALSE once the left fails
    before any such i, or once the bound is exhausted; INCONCLUSIVE when the
    trace runs out undecided (for well-formed sampling this only happens on
    truncated traces).
    """
    if not trace.states:
        raise ValueError("empty trace")
    for i, s in enumerate(trace.states):
        if eval_state(model, q.right, s):
            return TraceVerdict.TRUE
        if not eval_state(model, q.left, s):
            return TraceVerdict.FALSE
        if q.bound is not None and i == q.bound:
            return TraceVerdict.FALSE
    return TraceVerdict.INCONCLUSIVE
