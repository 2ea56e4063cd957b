"""Reduction: thread steps, communication, policies, structural congruence
and the terminal-state taxonomy."""

import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

import pgv.syntax as S
from pgv.eval import (
    MinPriorityFirst, SeededRandom, StuckNotNormal, congruence_normalize,
    congruent, enabled_steps, explore, flatten, is_canonical_form,
    is_normal_form, is_terminated, run, to_config,
)
from pgv.parse import parse_program, parse_term
from pgv.pretty import config_str
from pgv.testkit import GenBudget, fill_holes, gen_pgv_config
from pgv.typecheck import typecheck_config

from helpers import corpus, run_retypechecking


def main_thread(src: str):
    return S.Thread(S.Flag.MAIN, parse_term(src))


# -- running whole programs --------------------------------------------------------

def test_pure_program_terminates_at_its_value():
    r = run(main_thread("let (x, y) = ((), ()) in x; y; ()"))
    assert r.outcome == "terminated"
    assert r.value == S.Unit()


def test_cycle_corpus_runs_to_unit():
    r = run(S.Thread(S.Flag.MAIN, parse_program(corpus("cycle.pgv"))),
            MinPriorityFirst(), fuel=1000)
    assert r.outcome == "terminated"
    assert r.value == S.Unit()
    comms = Counter(l for l in r.rules_used
                    if l in ("E-New", "E-Spawn", "E-Send", "E-Close",
                             "E-Link"))
    assert comms == {"E-New": 2, "E-Spawn": 1, "E-Send": 2, "E-Close": 2}


def test_deadlock_corpus_sticks_when_forced():
    # fill the unsatisfiable skeleton with some annotation and watch the
    # untyped program jam in a non-normal shape
    skeleton = parse_program(corpus("deadlock.pgv"))
    filled = fill_holes(skeleton, {"o": 0, "p": 2, "o'": 1, "q": 3})
    with pytest.raises(StuckNotNormal):
        run(S.Thread(S.Flag.MAIN, filled), MinPriorityFirst(), fuel=1000)


def test_echo_corpus_stops_in_a_normal_form():
    r = run(S.Thread(S.Flag.MAIN, parse_program(corpus("echo.pgv"))),
            MinPriorityFirst())
    assert r.outcome == "normal-form"
    expected = parse_program(
        "(nu x y : ?0 1 . !1 1 . end!2) "
        "child let (v, x1) = recv x in let x2 = send (v, x1) in "
        "close x2; () | main y")
    assert congruent(r.config, expected)
    assert is_normal_form(r.config)
    assert not is_terminated(r.config)


def test_link_forwards_between_sessions():
    src = ("(nu x y : end!0) (nu u v : end!0) "
           "child link (x, v) | child close u; () | main wait y; ()")
    config = parse_program(src)
    typecheck_config(config)
    r = run(config)
    assert r.outcome == "terminated"
    assert "E-Link" in r.rules_used


def test_fuel_exhaustion_reports_rather_than_raises():
    # starve a working program of fuel
    r = run(S.Thread(S.Flag.MAIN, parse_program(corpus("cycle.pgv"))),
            fuel=3)
    assert r.outcome == "fuel-exhausted"
    assert r.steps == 3


# -- policies ----------------------------------------------------------------------

def test_min_priority_policy_is_deterministic():
    config = parse_program(corpus("cycle.pgv"))
    runs = [run(S.Thread(S.Flag.MAIN, config)).rules_used
            for _ in range(2)]
    assert runs[0] == runs[1]


def test_seeded_policy_reproduces_itself():
    config = S.Thread(S.Flag.MAIN, parse_program(corpus("cycle.pgv")))
    a = run(config, SeededRandom(11)).rules_used
    b = run(config, SeededRandom(11)).rules_used
    assert a == b


def test_trace_snapshots_replay_the_run():
    r = run(S.Thread(S.Flag.MAIN, parse_program(corpus("cycle.pgv"))))
    assert len(r.trace) == r.steps
    assert r.trace[-1].config  # every step carries a printed configuration


# -- structural congruence ----------------------------------------------------------

def test_parallel_commutes():
    a = parse_program("child (); () | main ()")
    b = parse_program("main () | child (); ()")
    assert congruent(a, b)


def test_alpha_renaming_is_invisible():
    a = parse_program("(nu x y : end!0) child close x; () | main wait y; ()")
    b = parse_program("(nu u v : end!0) child close u; () | main wait v; ()")
    assert congruent(a, b)


def test_scope_extrusion():
    a = parse_program("(nu x y : end!0) "
                      "(child close x; wait y; () | main ())")
    b = parse_program("((nu x y : end!0) child close x; wait y; ()) "
                      "| main ()")
    assert congruent(a, b)


def test_congruence_distinguishes_different_programs():
    a = parse_program("main ()")
    b = parse_program("main (); ()")
    assert not congruent(a, b)
    assert not congruent(parse_program("main () | child x; ()"),
                         parse_program("main ()"))


def test_finished_children_are_invisible_to_congruence():
    # a child that has fully reduced to () is garbage-collected by the
    # congruence, mirroring the empty parallel composition
    assert congruent(parse_program("main () | child ()"),
                     parse_program("main ()"))


def test_congruence_normalize_flattens():
    c = parse_program("(nu x y : end!0) "
                      "(child close x; wait y; () | main ())")
    norm = congruence_normalize(c)
    assert is_canonical_form(norm)


# -- state-space exploration ----------------------------------------------------------

def test_explore_reaches_the_unique_terminal():
    config = S.Thread(S.Flag.MAIN, parse_program(corpus("cycle.pgv")))
    states, edges, terminals = explore(config, depth=40)
    assert len(terminals) == 1
    (key,) = terminals
    assert is_terminated(states[key])


def test_explore_is_confluent_for_the_echo_program():
    config = S.Thread(S.Flag.MAIN, parse_program(corpus("echo.pgv")))
    states, _, terminals = explore(config, depth=20)
    assert len(terminals) == 1
    (key,) = terminals
    assert is_normal_form(states[key])


# -- properties over generated configurations -----------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_subject_reduction_on_generated_configs(seed):
    S.reset_fresh()
    config = gen_pgv_config(random.Random(seed), GenBudget())
    typecheck_config(config)
    final, _ = run_retypechecking(config, MinPriorityFirst())
    assert is_terminated(final) or is_normal_form(final)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000),
       st.integers(min_value=0, max_value=1_000))
def test_progress_under_random_scheduling(seed, policy_seed):
    S.reset_fresh()
    config = gen_pgv_config(random.Random(seed), GenBudget())
    r = run(config, SeededRandom(policy_seed), fuel=5000)
    assert r.outcome in ("terminated", "normal-form")
