"""Typing rules: linear environments, priority bounds, and the constant
schemas, for both terms and configurations."""

import pytest
from hypothesis import given, settings, strategies as st

import random

import pgv.syntax as S
from pgv.parse import parse_program, parse_term
from pgv.pretty import type_str
from pgv.testkit import GenBudget, gen_pgv_config
from pgv.typecheck import TypeCheckError, typecheck_config, typecheck_term

from helpers import corpus


def infer(src: str):
    r = typecheck_term(parse_term(src))
    return type_str(r.type), repr(r.bound)


def rejected(src: str, kind: str, env=None):
    with pytest.raises(TypeCheckError) as err:
        if isinstance(src, str):
            typecheck_term(parse_term(src), env=env)
        else:
            typecheck_config(src, env=env)
    assert err.value.kind == kind, err.value
    return err.value


# -- the functional core ---------------------------------------------------------

def test_unit_and_identity():
    assert infer("()") == ("1", "bot")
    assert infer(r"\x : 1. x") == ("1 -o-> 1", "bot")


def test_pure_functions_get_the_top_bottom_arrow():
    # a closed lambda that never communicates starts at top, ends at bot
    t, bound = infer(r"\x : 1. x; ()")
    assert t == "1 -o-> 1" and bound == "bot"


def test_capturing_lambda_lowers_the_start_bound():
    # capturing an endpoint with priority 2 caps the arrow's start at 2
    t, _ = infer(r"\c : end!2. \u : 1. close c; u")
    assert t == "end!2 -o-> 1 -o[2,2]-> 1"


def test_pairs_and_letpair():
    assert infer("((), ())") == ("1 * 1", "bot")
    assert infer("let (x, y) = ((), ()) in x; y; ()") == ("1", "bot")


def test_sums_and_case():
    t, _ = infer(r"\v : 1 + 1. case v { inl x -> x; () | inr y -> y; () }")
    assert t == "(1 + 1) -o-> 1"


def test_bare_injection_needs_a_context():
    # the other summand of a bare inl is not inferable
    rejected("case inl () { inl x -> x; () | inr y -> y; () }",
             "schema-instantiation")


def test_case_branches_must_agree_on_type_and_bound():
    rejected(r"\v : 1 + end!0. case v { inl x -> x; () | inr c -> close c; () }",
             "priority-violation")


def test_absurd_consumes_anything():
    t, _ = infer(r"\v : 0. \c : end!3. absurd v")
    assert t == "0 -o-> end!3 -o-> 1"  # the result type here is free: 1 picked


def test_empty_offer_consumes_the_environment():
    t, _ = infer(r"\v : (&)0{}. \c : end!3. offer v {}")
    assert t == "?0 0 . end?1 -o-> end!3 -o[0,1]-> 1"


def test_offer_branches():
    t, _ = infer(r"\v : (&)0{end?2 ; end?2}. "
                 "offer v { inl a -> wait a; () | inr b -> wait b; () }")
    assert t == "?0 (end?2 + end?2) . end?1 -o[top,2]-> 1"


# -- linearity -------------------------------------------------------------------

def test_unused_endpoint_is_rejected():
    rejected(r"\c : end!0. ()", "linearity")


def test_duplicated_endpoint_is_rejected():
    rejected(r"\c : end!0. close c; close c; ()", "linearity")


def test_unbound_name():
    rejected("x", "unbound-name")


def test_unrestricted_unit_can_still_not_be_duplicated():
    # the calculus is fully linear: even 1-typed variables are used once
    rejected(r"\u : 1. (u, u)", "linearity")


# -- constants -------------------------------------------------------------------

def test_new_returns_the_dual_pair():
    t, _ = infer("(new[!0 1 . end!1]) ()")
    assert t == "!0 1 . end!1 * ?0 1 . end?1"


def test_new_requires_an_annotation():
    with pytest.raises(TypeCheckError):
        typecheck_term(S.App(S.Const("new"), S.Unit()))


def test_send_recv_close_wait_pipeline():
    src = ("let (x, y) = new [!0 1 . end!1] () in "
           "spawn (\\(). let x1 = send ((), x) in close x1; ()); "
           "let (v, y1) = recv y in v; wait y1; ()")
    assert infer(src) == ("1", "1")


def test_link_types_as_a_forwarder():
    t, _ = infer(r"\x : !0 1 . end!1. \y : ?0 1 . end?1. link (x, y)")
    assert t == "!0 1 . end!1 -o-> ?0 1 . end?1 -o[0,bot]-> 1"


def test_close_on_wrong_polarity():
    rejected(r"\c : end?0. close c; ()", "schema-instantiation")
    rejected(r"\c : end!0. wait c; ()", "schema-instantiation")


def test_select_elaboration_types():
    # the annotation on `select` is the branch the session continues at
    src = (r"\c : (+)0{end!2 ; end!2}. "
           "let c' = (select [end!2] inl) c in close c'; ()")
    t, _ = infer(src)
    assert t == "!0 (end?2 + end?2) . end!1 -o[top,2]-> 1"


# -- priorities -------------------------------------------------------------------

def test_actions_must_fire_in_priority_order():
    rejected(r"\c : end!1. \d : end?0. close c; wait d; ()",
             "priority-violation")


def test_send_blocked_by_lower_priority_in_context():
    # sending at 2 while holding an unused-at-0 endpoint in the rest
    rejected(
        r"\c : !2 1 . end!3. \d : end?0. "
        "let c1 = send ((), c) in close c1; wait d; ()",
        "priority-violation")


def test_cyclic_priorities_are_rejected():
    # the deadlocked double exchange: each thread wants the other first
    src = ("let (x, x') = new [!0 1 . end!2] () in "
           "let (u, u') = new [!1 1 . end!3] () in "
           "spawn (\\(). let x1 = send ((), x) in "
           "let u1 = send ((), u) in close x1; close u1; ()); "
           "let (v, u1') = recv u' in v; "
           "let (v', x1') = recv x' in v'; "
           "wait x1'; wait u1'; ()")
    rejected(src, "priority-violation")


def test_unfilled_holes_are_a_schema_error():
    rejected("let (x, y) = new [!?o 1 . end!?p] () in "
             "let z = send ((), x) in close z; "
             "let (v, y1) = recv y in v; wait y1; ()",
             "schema-instantiation")


# -- configurations ----------------------------------------------------------------

def test_config_flags():
    assert typecheck_config(parse_program("main ()")).flag is S.Flag.MAIN
    assert typecheck_config(parse_program("child ()")).flag is S.Flag.CHILD


def test_two_mains_clash():
    rejected(parse_program("main () | main ()"), "two-main-threads")


def test_child_must_return_unit():
    rejected(parse_program("(nu x y : end!0) child x | child wait y; ()"),
             "type-mismatch")


def test_restriction_requires_annotation():
    c = S.Res("x", "y",
              S.Par(S.Thread(S.Flag.CHILD, parse_term("close x; ()")),
                    S.Thread(S.Flag.MAIN, parse_term("wait y; ()"))),
              None)
    rejected(c, "missing-annotation")


def test_restriction_binds_dual_endpoints():
    c = parse_program("(nu x y : end!0) child close x; () | main wait y; ()")
    assert typecheck_config(c).flag is S.Flag.MAIN
    # both ends closing is a duality violation through the annotation
    bad = parse_program("(nu x y : end!0) child close x; () "
                        "| main close y; ()")
    with pytest.raises(TypeCheckError):
        typecheck_config(bad)


def test_open_configuration_against_environment():
    c = parse_program("main close x; ()")
    r = typecheck_config(c, env={"x": S.Sess(S.EndS(0))})
    assert r.flag is S.Flag.MAIN


def test_corpus_cycle_types_at_unit():
    r = typecheck_term(parse_program(corpus("cycle.pgv")))
    assert type_str(r.type) == "1"


def test_derivation_tree_is_renderable():
    r = typecheck_term(parse_term("let (x, y) = ((), ()) in x; y; ()"))
    text = r.derivation.render()
    assert "T-" in text and "\n" in text


# -- generated configurations always typecheck -------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_generated_configurations_typecheck(seed):
    S.reset_fresh()
    config = gen_pgv_config(random.Random(seed), GenBudget())
    assert typecheck_config(config).flag is S.Flag.MAIN
