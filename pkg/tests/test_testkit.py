"""The test kit itself: hole filling, the priority-annotation search with
its unsat witnesses, the two generators, and the scheduler builders."""

import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

import pgv.syntax as S
from pgv.eval import MinPriorityFirst, SeededRandom, congruent, run
from pgv.parse import parse_term
from pgv.pcp import pcp_run, pcp_typecheck
from pgv.testkit import (
    GenBudget, fill_holes, find_annotations, gen_pcp_process, gen_pgv_config,
    pcp_scheduler, pgv_scheduler, priority_holes,
)
from pgv.translate import translate_config
from pgv.typecheck import TypeCheckError, typecheck_config, typecheck_term

from helpers import corpus

ACYCLIC = (
    "let (x, x') = new [!?o 1 . end!?p] () in "
    "let (u, u') = new [!?o' 1 . end!?q] () in "
    "spawn (\\(). let x1 = send ((), x) in "
    "             let (v, u1) = recv u' in v; close x1; wait u1; ()); "
    "let (v', x1') = recv x' in v'; "
    "let u1' = send ((), u) in "
    "wait x1'; close u1'; ()")

CYCLIC = (
    "let (x, x') = new [!?o 1 . end!?p] () in "
    "let (u, u') = new [!?o' 1 . end!?q] () in "
    "spawn (\\(). let x1 = send ((), x) in "
    "             let u1 = send ((), u) in close x1; close u1; ()); "
    "let (v, u1') = recv u' in v; "
    "let (v', x1') = recv x' in v'; "
    "wait u1'; wait x1'; ()")


# -- holes and filling ---------------------------------------------------------------

def test_holes_are_reported_in_first_appearance_order():
    t = parse_term(ACYCLIC)
    assert priority_holes(t) == ["o", "p", "o'", "q"]


def test_filling_removes_the_holes():
    t = parse_term(ACYCLIC)
    filled = fill_holes(t, {"o": 0, "p": 2, "o'": 1, "q": 3})
    assert priority_holes(filled) == []
    typecheck_term(filled)


def test_filling_demands_a_complete_assignment():
    t = parse_term(ACYCLIC)
    with pytest.raises(KeyError):
        fill_holes(t, {"o": 0, "q": 3})


# -- annotation search ---------------------------------------------------------------

def test_search_finds_the_pointwise_least_assignment():
    t = parse_term(ACYCLIC)
    res = find_annotations(t, 4)
    assert res.found
    assert res.assignment == {"o": 0, "p": 2, "o'": 1, "q": 3}
    # least in lexicographic enumeration order = first brute-force hit
    oracle = None
    for values in itertools.product(range(5), repeat=4):
        cand = dict(zip(priority_holes(t), values))
        try:
            typecheck_term(fill_holes(t, cand))
            oracle = cand
            break
        except TypeCheckError:
            pass
    assert res.assignment == oracle


def test_the_found_assignment_actually_runs():
    t = parse_term(ACYCLIC)
    res = find_annotations(t, 4)
    filled = fill_holes(t, res.assignment)
    r = run(S.Thread(S.Flag.MAIN, filled), MinPriorityFirst(), fuel=5000)
    assert r.outcome == "terminated"


def test_a_cyclic_skeleton_is_unsatisfiable_with_a_witness():
    t = parse_term(CYCLIC)
    res = find_annotations(t, 4)
    assert not res.found
    assert res.tried == 5 ** 4
    assert res.witness == frozenset({"o < o'", "o' < o"})


def test_a_term_without_holes_is_just_checked():
    res = find_annotations(parse_term("()"), 4)
    assert res.found and res.assignment == {} and res.tried == 1
    bad = find_annotations(parse_term("close ()"), 4)
    assert not bad.found


# -- generators ----------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_generated_configurations_typecheck_and_finish(seed):
    S.reset_fresh()
    cfg = gen_pgv_config(random.Random(seed), GenBudget())
    typecheck_config(cfg)
    r = run(cfg, MinPriorityFirst(), fuel=5000)
    assert r.outcome in ("terminated", "normal-form"), r.outcome


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_generated_configurations_finish_under_a_random_policy(seed):
    S.reset_fresh()
    cfg = gen_pgv_config(random.Random(seed), GenBudget())
    r = run(cfg, SeededRandom(seed), fuel=5000)
    assert r.outcome in ("terminated", "normal-form"), r.outcome


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_generated_processes_typecheck_and_halt(seed):
    S.reset_fresh()
    p = gen_pcp_process(random.Random(seed), GenBudget())
    pcp_typecheck(p)
    assert pcp_run(p, fuel=5000).outcome == "halt"


def test_generation_is_deterministic_per_seed():
    from pgv.pretty import config_str
    S.reset_fresh()
    a = config_str(gen_pgv_config(random.Random(42)))
    S.reset_fresh()
    b = config_str(gen_pgv_config(random.Random(42)))
    assert a == b


def test_the_budget_is_respected():
    # generated configurations come pre-flattened: a stack of restrictions
    # around a parallel composition of threads
    budget = GenBudget(threads=(5, 5), channels=(2, 2))
    for seed in range(5):
        S.reset_fresh()
        cfg = gen_pgv_config(random.Random(seed), budget)
        assert sum(1 for _ in S.threads(cfg)) == 5
        restrictions = 0
        node = cfg
        while isinstance(node, S.Res):
            restrictions += 1
            node = node.body
        assert restrictions == 2


# -- schedulers ----------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4])
def test_schedulers_agree_on_both_sides(n):
    S.reset_fresh()
    sp = pcp_scheduler(n)
    pcp_typecheck(sp)
    r = pcp_run(sp, fuel=5000)
    assert r.outcome == "halt"
    closes = sum(1 for label, _ in r.trace if label == "E-Close")
    assert closes == 3 * n + 1

    S.reset_fresh()
    sg = pgv_scheduler(n)
    typecheck_config(sg)
    rg = run(sg, MinPriorityFirst(), fuel=5000)
    assert rg.outcome in ("terminated", "normal-form")
    gcloses = sum(1 for s in rg.trace if s.label == "E-Close")
    assert gcloses == closes


@pytest.mark.parametrize("n", [2, 3])
def test_the_scheduler_image_is_the_handwritten_config(n):
    S.reset_fresh()
    image = translate_config(pcp_scheduler(n))
    S.reset_fresh()
    hand = pgv_scheduler(n)
    assert congruent(image, hand)


def test_corpus_scheduler_files_match_the_builders():
    from pgv.pcp import parse_process, pcp_congruent
    for n in (2, 3, 4):
        S.reset_fresh()
        built = pcp_scheduler(n)
        S.reset_fresh()
        filed = parse_process(corpus(f"sched{n}.pcp"))
        assert pcp_congruent(built, filed), n
