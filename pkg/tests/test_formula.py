import pytest

from bouquetmc.formula import (
    And,
    Ap,
    FormulaSyntaxError,
    Lit,
    Not,
    Or,
    TraceVerdict,
    UntilQuery,
    eval_state,
    eval_trace,
    formula_fingerprint,
    parse_formula,
    render_query,
    sat_vector,
)
from bouquetmc.model import Trace


def test_parse_unbounded():
    q = parse_formula("P=? [ a U b ]")
    assert q == UntilQuery(Ap("a"), Ap("b"), None)


def test_parse_bounded_with_operators():
    q = parse_formula("P=? [ (a | c) U<=10 !b ]")
    assert q.left == Or(Ap("a"), Ap("c"))
    assert q.right == Not(Ap("b"))
    assert q.bound == 10


def test_parse_whitespace_insensitive():
    # adjacent identifiers still need separation, but all symbol boundaries do not
    assert parse_formula("P=?[(a)U(b)]") == parse_formula("  P = ? [ a U b ]  ")
    assert parse_formula("P=?[!a&!b U<=7 b|a]") == parse_formula(
        "P=? [ !a & !b U<=7 b | a ]")


def test_parse_precedence():
    q = parse_formula("P=? [ !a & b | c U b ]")
    assert q.left == Or(And(Not(Ap("a")), Ap("b")), Ap("c"))


def test_parse_literals():
    q = parse_formula("P=? [ true U false ]")
    assert q.left == Lit(True)
    assert q.right == Lit(False)


def test_parse_nested_p_rejected():
    with pytest.raises(FormulaSyntaxError, match="nested 'P'"):
        parse_formula("P=? [ a U P=?[b U c] ]")


def test_parse_errors_carry_position():
    with pytest.raises(FormulaSyntaxError) as exc:
        parse_formula("P=? [ a U ]")
    assert exc.value.position == 10


def test_parse_trailing_garbage():
    with pytest.raises(FormulaSyntaxError, match="trailing"):
        parse_formula("P=? [ a U b ] extra")


def test_render_roundtrip():
    for text in ("P=? [ a U b ]", "P=? [ (a | c) U<=10 !b ]",
                 "P=? [ !a & !b U true ]"):
        q = parse_formula(text)
        assert parse_formula(render_query(q)) == q


def test_fingerprint_separates_formulas():
    fps = {formula_fingerprint(parse_formula(t))
           for t in ("P=? [ a U b ]", "P=? [ b U a ]", "P=? [ a U<=3 b ]")}
    assert len(fps) == 3


def test_eval_state_basic(t1):
    assert eval_state(t1, Ap("a"), 0)
    assert not eval_state(t1, Ap("a"), 2)
    assert eval_state(t1, And(Not(Ap("a")), Not(Ap("b"))), 2)


def test_eval_state_unknown_ap(t1):
    with pytest.raises(ValueError, match="unknown atomic proposition 'q'"):
        eval_state(t1, Ap("q"), 0)


def test_sat_vector_matches_eval_state(t1, t2, l10):
    formulas = [Ap("a"), Ap("b"), Not(Ap("a")), And(Ap("a"), Not(Ap("b"))),
                Or(Ap("b"), Lit(False)), Lit(True)]
    for model in (t1, t2, l10):
        for f in formulas:
            vec = sat_vector(model, f)
            for s in range(model.n):
                assert vec[s] == eval_state(model, f, s)


def test_eval_trace_true(t1):
    q = parse_formula("P=? [ a U b ]")
    assert eval_trace(t1, q, Trace([0, 1])) is TraceVerdict.TRUE


def test_eval_trace_false(t1):
    q = parse_formula("P=? [ a U b ]")
    assert eval_trace(t1, q, Trace([0, 2])) is TraceVerdict.FALSE


def test_eval_trace_inconclusive(t1):
    q = parse_formula("P=? [ a U b ]")
    assert eval_trace(t1, q, Trace([0], truncated=True)) is TraceVerdict.INCONCLUSIVE


def test_eval_trace_empty(t1):
    q = parse_formula("P=? [ a U b ]")
    with pytest.raises(ValueError, match="empty trace"):
        eval_trace(t1, q, Trace([]))


def test_eval_trace_right_wins_at_position_zero(t1):
    # j < i quantification is vacuous at i = 0
    q = parse_formula("P=? [ false U b ]")
    assert eval_trace(t1, q, Trace([1])) is TraceVerdict.TRUE


def test_eval_trace_bounded_exhaustion(l10):
    q = parse_formula("P=? [ a U<=3 b ]")
    assert eval_trace(l10, q, Trace(list(range(10)))) is TraceVerdict.FALSE
    q9 = parse_formula("P=? [ a U<=9 b ]")
    assert eval_trace(l10, q9, Trace(list(range(10)))) is TraceVerdict.TRUE


def test_eval_trace_conclusive_verdicts_stable_under_extension(t1, t2):
    # once TRUE or FALSE, any extension of the trace agrees
    q = parse_formula("P=? [ a U b ]")
    for model, prefix, extension in [
        (t1, [0, 1], [1, 1]),
        (t1, [0, 2], [2, 2, 2]),
        (t2, [0, 0, 1], [1]),
    ]:
        before = eval_trace(model, q, Trace(prefix))
        assert before in (TraceVerdict.TRUE, TraceVerdict.FALSE)
        assert eval_trace(model, q, Trace(prefix + extension)) is before


def test_eval_trace_bounded_agrees_with_unbounded_on_resolved(t1):
    unbounded = parse_formula("P=? [ a U b ]")
    bounded = parse_formula("P=? [ a U<=50 b ]")
    for states in ([0, 1], [0, 2], [0, 1, 1, 1]):
        assert eval_trace(t1, bounded, Trace(states)) is eval_trace(t1, unbounded, Trace(states))
