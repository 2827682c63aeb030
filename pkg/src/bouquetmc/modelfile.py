"""Line-oriented text format for chains, canonical serialization, hashing.

Format (UTF-8, '#' starts a comment line):

    dtmc
    states <n>
    init <s>
    transitions <m>
    <src> <dst> <prob>     (m lines)
    labels <ap1> <ap2> ...
    <state>: <ap> <ap> ... (one line per state with a non-empty label set)

The canonical writer sorts transitions by (src, dst), sorts label lines by
state, and renders probabilities with 17 significant digits so that
parse -> write -> parse is the identity and the byte stream is hashable.
"""

from __future__ import annotations

import hashlib
from typing import TextIO, Union

import numpy as np

from .model import Dtmc, validate


class ModelFormatError(ValueError):
    """Parse or serialization failure, carrying the offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


def parse_model(text: str) -> Dtmc:
    """Parse the MODEL format into a validated chain.

    Raises ModelFormatError with a line number for malformed headers,
    probabilities outside (0,1], row-sum violations, out-of-range state
    indices, and duplicate transitions.
    """
    lines: list[tuple[int, str]] = []
    for i, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        lines.append((i, stripped))

    pos = 0

    def take(what: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 1
            raise ModelFormatError(last, f"unexpected end of document, expected {what}")
        item = lines[pos]
        pos += 1
        return item

    ln, header = take("'dtmc' header")
    if header != "dtmc":
        raise ModelFormatError(ln, f"expected 'dtmc' header, got {header!r}")

    ln, states_line = take("'states <n>'")
    n = _keyword_int(ln, states_line, "states")
    if n <= 0:
        raise ModelFormatError(ln, f"state count must be positive, got {n}")

    ln, init_line = take("'init <s>'")
    initial = _keyword_int(ln, init_line, "init")
    if not 0 <= initial < n:
        raise ModelFormatError(ln, f"initial state {initial} out of range [0,{n})")

    ln, trans_line = take("'transitions <m>'")
    m = _keyword_int(ln, trans_line, "transitions")
    trans_header_line = ln
    if m < 0:
        raise ModelFormatError(ln, f"transition count must be non-negative, got {m}")

    rows: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    seen: set[tuple[int, int]] = set()
    first_row_line = [0] * n
    for _ in range(m):
        ln, entry = take("a transition line")
        parts = entry.split()
        if len(parts) != 3:
            raise ModelFormatError(ln, f"expected '<src> <dst> <prob>', got {entry!r}")
        try:
            src, dst = int(parts[0]), int(parts[1])
        except ValueError:
            raise ModelFormatError(ln, f"non-integer state index in {entry!r}") from None
        try:
            p = float(parts[2])
        except ValueError:
            raise ModelFormatError(ln, f"bad probability literal {parts[2]!r}") from None
        if not 0 <= src < n:
            raise ModelFormatError(ln, f"unknown state index {src} (states {n})")
        if not 0 <= dst < n:
            raise ModelFormatError(ln, f"unknown state index {dst} (states {n})")
        if not 0.0 < p <= 1.0:
            raise ModelFormatError(ln, f"probability {p!r} outside (0,1]")
        if (src, dst) in seen:
            raise ModelFormatError(ln, f"duplicate transition {src} -> {dst}")
        seen.add((src, dst))
        if not rows[src]:
            first_row_line[src] = ln
        rows[src].append((dst, p))

    ln, labels_line = take("'labels ...' line")
    parts = labels_line.split()
    if parts[0] != "labels":
        raise ModelFormatError(ln, f"expected 'labels' line, got {labels_line!r}")
    ap_names = parts[1:]
    if len(set(ap_names)) != len(ap_names):
        raise ModelFormatError(ln, "duplicate atomic proposition name")
    ap_index = {name: j for j, name in enumerate(ap_names)}

    labels: list[set[int]] = [set() for _ in range(n)]
    labeled_states: set[int] = set()
    while pos < len(lines):
        ln, entry = take("a label line")
        head, sep, rest = entry.partition(":")
        if not sep:
            raise ModelFormatError(ln, f"expected '<state>: <ap> ...', got {entry!r}")
        try:
            s = int(head.strip())
        except ValueError:
            raise ModelFormatError(ln, f"non-integer state index {head.strip()!r}") from None
        if not 0 <= s < n:
            raise ModelFormatError(ln, f"unknown state index {s} (states {n})")
        if s in labeled_states:
            raise ModelFormatError(ln, f"duplicate label line for state {s}")
        labeled_states.add(s)
        aps = rest.split()
        if not aps:
            raise ModelFormatError(ln, f"empty label set for state {s}")
        for name in aps:
            if name not in ap_index:
                raise ModelFormatError(ln, f"unknown atomic proposition {name!r}")
            labels[s].add(ap_index[name])

    for s in range(n):
        if not rows[s]:
            raise ModelFormatError(trans_header_line, f"empty row at state {s}")
        total = sum(p for _, p in rows[s])
        if abs(total - 1.0) > 1e-9:
            raise ModelFormatError(first_row_line[s], f"row-sum {total:.10g} at state {s}")

    model = Dtmc.from_rows(n, initial, rows, ap_names, labels)
    problem = validate(model)
    if problem is not None:
        raise ModelFormatError(trans_header_line, problem)
    return model


def _keyword_int(ln: int, line: str, keyword: str) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != keyword:
        raise ModelFormatError(ln, f"expected '{keyword} <int>', got {line!r}")
    try:
        return int(parts[1])
    except ValueError:
        raise ModelFormatError(ln, f"expected integer after '{keyword}', got {parts[1]!r}") from None


def canonical_text(model: Dtmc) -> str:
    """Render the canonical MODEL document (sorted, 17-significant-digit probs)."""
    out = ["dtmc", f"states {model.n}", f"init {model.initial}",
           f"transitions {model.edge_count()}"]
    src = np.repeat(np.arange(model.n), np.diff(model.row_ptr))
    out.extend(f"{s} {t} {p:.17g}" for s, t, p in
               zip(src.tolist(), model.col.tolist(), model.prob.tolist()))
    out.append("labels" + "".join(f" {name}" for name in model.ap_names))
    labeled = np.nonzero(model.label_bits.any(axis=1))[0]
    for s in labeled:
        aps = np.nonzero(model.label_bits[s])[0]
        out.append(f"{s}: " + " ".join(model.ap_names[j] for j in aps))
    return "\n".join(out) + "\n"


def write_model(model: Dtmc, sink: Union[str, TextIO]) -> None:
    """Write the canonical MODEL document; refuses invalid chains."""
    problem = validate(model)
    if problem is not None:
        raise ValueError(f"refusing to write invalid model: {problem}")
    text = canonical_text(model)
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


def model_fingerprint(model: Dtmc) -> str:
    """sha256 hex digest of the canonical serialization."""
    return hashlib.sha256(canonical_text(model).encode("utf-8")).hexdigest()
