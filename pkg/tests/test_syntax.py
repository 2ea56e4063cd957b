"""Type grammar, duality, expansion and the surface syntax round-trip."""

import pytest
from hypothesis import given

import pgv.syntax as S
from pgv.parse import ParseError, parse_program, parse_session, parse_term
from pgv.pretty import config_str, session_str, term_str, type_str

from helpers import corpus, session_types, value_types


# -- bounds ------------------------------------------------------------------------

def test_bound_lattice_order():
    assert S.BOT < S.fin(0) < S.fin(1) < S.fin(7) < S.TOP
    assert S.join(S.BOT, S.fin(3)) == S.fin(3)
    assert S.join(S.fin(2), S.TOP) == S.TOP
    assert S.meet(S.fin(2), S.fin(5)) == S.fin(2)
    assert S.meet(S.TOP, S.TOP) == S.TOP
    assert S.meet() == S.TOP          # empty meet is the top element
    assert S.join() == S.BOT


def test_bound_repr():
    assert repr(S.BOT) == "bot"
    assert repr(S.TOP) == "top"
    assert repr(S.fin(4)) == "4"


def test_fin_rejects_negatives_and_holes():
    with pytest.raises(ValueError):
        S.fin(-1)
    with pytest.raises(ValueError):
        S.fin(S.Hole("o"))


# -- duality -----------------------------------------------------------------------

def test_dual_golden():
    s = S.Send(0, S.UnitT(), S.EndS(1))
    assert S.dual(s) == S.Recv(0, S.UnitT(), S.EndR(1))
    assert S.dual(S.EndR(3)) == S.EndS(3)


def test_dual_swaps_select_and_offer_and_dualises_branches():
    sel = S.SelectS(0, (S.EndS(1), S.EndR(2)))
    assert S.dual(sel) == S.OfferS(0, (S.EndR(1), S.EndS(2)))
    assert S.dual(S.SelectS(5, ())) == S.OfferS(5, ())


@given(session_types())
def test_dual_is_an_involution(s):
    assert S.dual(S.dual(s)) == s


@given(session_types())
def test_dual_preserves_priorities(s):
    assert S.session_priorities(S.dual(s)) == S.session_priorities(s)
    assert S.pr(S.dual(s)) == S.pr(s)


# -- branch expansion ---------------------------------------------------------------

def test_expand_select_is_a_send_of_a_sum_of_dual_continuations():
    left, right = S.EndS(2), S.EndR(3)
    got = S.expand_session(S.SelectS(0, (left, right)))
    want = S.Send(0, S.Sum(S.Sess(S.dual(left)), S.Sess(S.dual(right))),
                  S.EndS(1))
    assert got == want


def test_expand_offer_keeps_branches_undualised():
    left, right = S.EndS(2), S.EndR(3)
    got = S.expand_session(S.OfferS(0, (left, right)))
    want = S.Recv(0, S.Sum(S.Sess(left), S.Sess(right)), S.EndR(1))
    assert got == want


def test_expand_empty_choice_ships_the_void_type():
    assert S.expand_session(S.SelectS(4, ())) == \
        S.Send(4, S.VoidT(), S.EndS(5))
    assert S.expand_session(S.OfferS(4, ())) == \
        S.Recv(4, S.VoidT(), S.EndR(5))


@given(session_types())
def test_expansion_commutes_with_duality(s):
    assert S.expand_session(S.dual(s)) == S.dual(S.expand_session(s))


# -- priorities ---------------------------------------------------------------------

def test_pr_reads_the_head_connective():
    assert S.pr(S.Send(3, S.UnitT(), S.EndS(9))) == S.fin(3)
    assert S.pr(S.OfferS(1, ())) == S.fin(1)


def test_minpr_goldens():
    sess = S.Sess(S.Recv(2, S.UnitT(), S.EndR(5)))
    assert S.minpr(S.UnitT()) == S.TOP
    assert S.minpr(S.VoidT()) == S.TOP
    assert S.minpr(sess) == S.fin(2)
    assert S.minpr(S.Prod(S.UnitT(), sess)) == S.fin(2)
    assert S.minpr(S.Fn(S.fin(1), S.fin(4), sess, S.UnitT())) == S.fin(1)
    assert S.minpr_env({"x": sess, "y": S.UnitT()}.items()) == S.fin(2)
    assert S.minpr_env([]) == S.TOP


def test_well_formed_session_requires_head_minimality():
    assert S.well_formed_session(S.Send(0, S.UnitT(), S.EndS(1)))
    assert not S.well_formed_session(S.Send(2, S.UnitT(), S.EndS(1)))
    assert S.well_formed_session(
        S.Send(0, S.Sess(S.EndS(7)), S.EndS(1)))     # payloads don't count
    # skeletons with holes are deferred until the holes are filled
    assert S.well_formed_session(S.Send(S.Hole("o"), S.UnitT(),
                                        S.EndS(S.Hole("p"))))


# -- terms: substitution and scoping --------------------------------------------------

def test_free_names_and_substitute():
    m = parse_term(r"\y : 1. x")
    assert S.free_names(m) == {"x"}
    out = S.substitute(m, "x", S.Unit())
    assert S.free_names(out) == set()


def test_substitute_guards_the_unique_binder_invariant():
    # binders are globally unique, so substituting a name that is bound
    # somewhere inside is a pipeline bug and trips the guard
    m = S.Lam("x", S.Var("x"), S.UnitT())
    with pytest.raises(AssertionError):
        S.substitute(m, "x", S.Unit())


def test_elaborate_let_and_lamunit():
    let = parse_term("let u = () in u")
    assert S.elaborate(let) == S.App(S.Lam("u", S.Var("u"), None), S.Unit())
    lam = S.elaborate(parse_term(r"\(). ()"))
    assert isinstance(lam, S.Lam) and lam.ann == S.UnitT()


def test_elaborate_select_closes_the_carrier():
    m = S.elaborate(S.App(S.Const("select_inl",
                                  S.SelectS(0, (S.EndS(2), S.EndS(2)))),
                          S.Var("c")))
    assert "close" in term_str(m) and "new" in term_str(m)
    assert S.is_core(m)


# -- parsing and printing -------------------------------------------------------------

@given(session_types())
def test_session_print_parse_round_trip(s):
    # the parser expands choice sugar eagerly, so printing and reparsing
    # lands on the expanded form of the original
    assert parse_session(session_str(s)) == S.expand_session(s)


TERM_BATTERY = [
    "()",
    r"\x : 1. x",
    r"\(x,y). (y, x)",
    "let (x,y) = ((), ()) in x; y; ()",
    "case inl () { inl x -> x | inr y -> y }",
    "offer m { inl x -> wait x; () | inr y -> wait y; () }",
    "offer m {}",
    "(new[!0 1 . end!1]) ()",
    "select [end!2] inl",
    "let u = send ((), c) in close u; ()",
    "absurd v",
    "link (x, y)",
]


@pytest.mark.parametrize("src", TERM_BATTERY)
def test_term_print_parse_is_stable(src):
    once = parse_term(src)
    again = parse_term(term_str(once))
    assert again == once


CONFIG_BATTERY = [
    "main ()",
    "child (); () | main ()",
    "(nu x y : end!0) child close x; () | main wait y; ()",
    "(nu x y : (+)0{end!2 ; end!2}) main let c = (select [end!2] inl) x "
    "in close c; offer y { inl a -> wait a; () | inr b -> wait b; () }",
]


@pytest.mark.parametrize("src", CONFIG_BATTERY)
def test_config_print_parse_is_stable(src):
    once = parse_program(src)
    again = parse_program(config_str(once))
    assert again == once


@given(value_types())
def test_type_print_parse_round_trip(t):
    from pgv.parse import parse_type
    assert parse_type(type_str(t)) == S.expand_type(t)


def test_parser_freshens_shadowed_binders():
    m = parse_term(r"\x : 1. (\x : 1. x) x")
    inner = m.body.fn
    assert inner.var != "x"
    assert inner.body == S.Var(inner.var)


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_term("let (x = () in x")
    with pytest.raises(ParseError):
        parse_term("$$$")
    with pytest.raises(ParseError):
        parse_session("!0 1")          # missing continuation


def test_corpus_files_parse():
    assert isinstance(parse_program(corpus("cycle.pgv")), S.Thread) is False
    parse_program(corpus("deadlock.pgv"))
    parse_program(corpus("echo.pgv"))
