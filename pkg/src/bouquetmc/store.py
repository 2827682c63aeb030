"""Annotation persistence: human-inspectable, diff-friendly, bit-exact.

File layout (UTF-8, line-oriented):

    annotations v1
    model sha256:<hex digest of the canonical model serialization>
    k <int>
    state <id> flower [reach <count>]
    state <id> notflower
    prob <formula-fingerprint-hex> <state> <value with 17 significant digits>

State lines are sorted by id, prob lines by (fingerprint, state). Loading
rejects a mismatched model fingerprint or flower threshold.
"""

from __future__ import annotations

from typing import Optional, TextIO, Union

from .bouquet import FLOWER, NOTFLOWER, AnnotationStore


class AnnotationFileError(ValueError):
    """Corrupt annotation file, or one that belongs to a different model/k."""


def save_annotations(store: AnnotationStore, fingerprint: str,
                     sink: Union[str, TextIO]) -> None:
    lines = ["annotations v1", f"model sha256:{fingerprint}", f"k {store.k}"]
    for s in range(store.n):
        status = store.state(s)
        if status == FLOWER:
            reach = store.reach_count.get(s)
            suffix = f" reach {reach}" if reach is not None else ""
            lines.append(f"state {s} flower{suffix}")
        elif status == NOTFLOWER:
            lines.append(f"state {s} notflower")
    for (fp, s), value in sorted(store.prob_cache.items()):
        lines.append(f"prob {fp} {s} {value:.17g}")
    text = "\n".join(lines) + "\n"
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


def load_annotations(source: Union[str, TextIO], fingerprint: str,
                     n: int, k: Optional[int] = None) -> AnnotationStore:
    """Load a store saved for the model with the given fingerprint.

    n sizes the per-state array; a k argument, when given, must match the
    file's k. Raises AnnotationFileError on mismatch or corruption.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    lines = [l for l in (raw.strip() for raw in text.splitlines()) if l]
    if len(lines) < 3:
        raise AnnotationFileError("truncated annotation file")
    if lines[0] != "annotations v1":
        raise AnnotationFileError(f"unsupported header {lines[0]!r}")
    if not lines[1].startswith("model sha256:"):
        raise AnnotationFileError(f"bad model line {lines[1]!r}")
    file_fp = lines[1][len("model sha256:"):]
    if file_fp != fingerprint:
        raise AnnotationFileError(
            f"annotation file belongs to a different model "
            f"(file {file_fp[:12]}..., expected {fingerprint[:12]}...)")
    parts = lines[2].split()
    if len(parts) != 2 or parts[0] != "k":
        raise AnnotationFileError(f"bad k line {lines[2]!r}")
    try:
        file_k = int(parts[1])
    except ValueError:
        raise AnnotationFileError(f"bad k value {parts[1]!r}") from None
    if k is not None and file_k != k:
        raise AnnotationFileError(f"annotation file has k={file_k}, run requires k={k}")

    store = AnnotationStore(n=n, k=file_k)
    for line in lines[3:]:
        parts = line.split()
        if parts[0] == "state":
            if len(parts) not in (3, 5):
                raise AnnotationFileError(f"bad state line {line!r}")
            s = _parse_state(parts[1], n, line)
            if parts[2] == "flower":
                reach = None
                if len(parts) == 5:
                    if parts[3] != "reach":
                        raise AnnotationFileError(f"bad state line {line!r}")
                    reach = int(parts[4])
                store.mark(s, FLOWER, reach=reach)
            elif parts[2] == "notflower":
                if len(parts) != 3:
                    raise AnnotationFileError(f"bad state line {line!r}")
                store.mark(s, NOTFLOWER)
            else:
                raise AnnotationFileError(f"unknown flower status {parts[2]!r}")
        elif parts[0] == "prob":
            if len(parts) != 4:
                raise AnnotationFileError(f"bad prob line {line!r}")
            s = _parse_state(parts[2], n, line)
            try:
                value = float(parts[3])
            except ValueError:
                raise AnnotationFileError(f"bad probability {parts[3]!r}") from None
            if not 0.0 <= value <= 1.0:
                raise AnnotationFileError(f"probability {value} outside [0,1]")
            store.prob_cache[(parts[1], s)] = value
        else:
            raise AnnotationFileError(f"unknown line kind {parts[0]!r}")
    return store


def _parse_state(token: str, n: int, line: str) -> int:
    try:
        s = int(token)
    except ValueError:
        raise AnnotationFileError(f"bad state index in {line!r}") from None
    if not 0 <= s < n:
        raise AnnotationFileError(f"state {s} out of range [0,{n}) in {line!r}")
    return s
