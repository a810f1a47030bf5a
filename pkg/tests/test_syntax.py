from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from dam.prim import PrimOp
from dam.syntax import (App, At, If0, Lam, Lit, Op, ParseError, UnboundVariable, Var,
                        check_closed_at, gen_term, parse, parse_program, pretty, resolve, size,
                        tokenize)


def core(src):
    return resolve(parse(src))[0]


def test_identity_and_k():
    assert core("(fn x. x) (fn x. fn y. x)") == App(Lam(Var(0)), Lam(Lam(Var(1))))


def test_let_desugars_to_application():
    assert core("let x = 1 in x + x") == App(Lam(Op(PrimOp.ADD, Var(0), Var(0))), Lit(1))


def test_if0():
    assert core("if0 0 then 1 else 2") == If0(Lit(0), Lit(1), Lit(2))


def test_arithmetic_precedence_and_associativity():
    assert core("1 + 2 * 3") == Op(PrimOp.ADD, Lit(1), Op(PrimOp.MUL, Lit(2), Lit(3)))
    assert core("5 - 1 - 1") == Op(PrimOp.MONUS, Op(PrimOp.MONUS, Lit(5), Lit(1)), Lit(1))


def test_at_binds_looser_than_arithmetic():
    assert core("1 + 2 @ B") == At(Op(PrimOp.ADD, Lit(1), Lit(2)), "B")
    assert core("(fn x. x) @ B") == At(Lam(Var(0)), "B")


def test_resolve_reports_nodes():
    _, nodes = resolve(parse("(1 @ B) + (2 @ C)"))
    assert nodes == {"B", "C"}


def test_comments_are_skipped():
    assert core("1 -- one\n+ 2") == Op(PrimOp.ADD, Lit(1), Lit(2))
    assert [t.kind for t in tokenize("x -- y")] == ["ident", "eof"]


@pytest.mark.parametrize("src, where", [
    ("fn x.", (1, 6)),
    ("(1 + 2", (1, 7)),
    ("fn fn. 1", (1, 4)),
    ("a @ b", (1, 5)),
])
def test_parse_errors_carry_positions(src, where):
    with pytest.raises(ParseError) as e:
        parse(src)
    assert (e.value.line, e.value.col) == where


def test_unbalanced_paren_cites_opening():
    with pytest.raises(ParseError, match="'\\(' at 1:1"):
        parse("(1 + 2")


def test_literal_range():
    assert core(str(2**64 - 1)) == Lit(2**64 - 1)
    with pytest.raises(ParseError):
        parse(str(2**64))


def test_unbound_variable():
    with pytest.raises(UnboundVariable) as e:
        resolve(parse("fn x. y"))
    assert e.value.name == "y"


def test_open_at_body_is_rejected():
    t = core("fn x. (x @ B)")
    (v,) = check_closed_at(t)
    assert v.index == 0 and v.path == (0,)
    with pytest.raises(ValueError, match="escaping index 0"):
        parse_program("fn x. (x @ B)")


def test_closed_at_body_is_accepted():
    assert check_closed_at(core("fn x. ((fn y. y) @ B) x")) == []


def test_pretty_prints_readable_binders():
    assert pretty(core("(fn a. a) (fn b. fn c. b)")) == "(fn x0. x0) (fn x0. fn x1. x0)"


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 40))
def test_generated_terms_round_trip(seed, n):
    t = gen_term(seed, n, ("A", "B"))
    assert size(t) <= n
    assert check_closed_at(t) == []
    assert resolve(parse(pretty(t)))[0] == t


def test_gen_is_deterministic():
    assert gen_term(7, 25, ("A", "B")) == gen_term(7, 25, ("A", "B"))


def test_gen_size_one_is_a_literal():
    assert all(isinstance(gen_term(s, 1), Lit) for s in range(20))


def test_gen_without_nodes_has_no_annotations():
    for s in range(50):
        assert "@" not in pretty(gen_term(s, 30))
