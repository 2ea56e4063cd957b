"""The process-to-term translation: type images, the duality square,
typability of translated processes, and the operational correspondence
checks that compare reductions on both sides."""

import pytest
from hypothesis import given, settings

import pgv.syntax as S
from pgv.eval import MinPriorityFirst, congruent, run
from pgv.parse import parse_program
from pgv.pcp import parse_pcp_type, parse_process, pcp_dual, pcp_typecheck
from pgv.pretty import config_str, session_str, type_str
from pgv.translate import (
    TranslateError, check_M_to_C, check_completeness, check_soundness,
    translate_config, translate_term, translate_type,
)
from pgv.typecheck import typecheck_config, typecheck_term

from helpers import PCP_CORPUS, corpus, pcp_types

EXAMPLES = ["close-wait.pcp", "bound-send.pcp", "choice.pcp", "link.pcp",
            "unbound-send.pcp"]


def process(name: str):
    p = parse_process(corpus(name))
    pcp_typecheck(p)
    return p


# -- type translation ---------------------------------------------------------------

def test_type_images():
    cases = [
        ("1[3]", "end!3"),
        ("bot[3]", "end?3"),
        ("1[1] *[0] bot[2]", "!0 end?1 . end?2"),  # sends carry the dual
        ("1[1] par[0] bot[2]", "?0 end!1 . end?2"),
        ("1[1] +[0] 1[1]", "(+)0{end!1 ; end!1}"),
        ("bot[1] &[0] bot[1]", "(&)0{end?1 ; end?1}"),
        ("0[4]", "(+)4{}"),
        ("top[4]", "(&)4{}"),
    ]
    for src, want in cases:
        assert session_str(translate_type(parse_pcp_type(src))) == want


@settings(max_examples=150, deadline=None)
@given(pcp_types())
def test_translation_commutes_with_duality(a):
    assert translate_type(pcp_dual(a)) == S.dual(translate_type(a))


@settings(max_examples=100, deadline=None)
@given(pcp_types())
def test_translation_keeps_the_head_priority(a):
    import pgv.pcp as P
    assert S.pr(translate_type(a)) == P.pcp_pr(a)


# -- process translation ------------------------------------------------------------

@pytest.mark.parametrize("name", EXAMPLES)
def test_term_images_are_unit_typed(name):
    d = typecheck_term(translate_term(process(name)))
    assert type_str(d.type) == "1"


@pytest.mark.parametrize("name", EXAMPLES)
def test_config_images_typecheck_as_children(name):
    d = typecheck_config(translate_config(process(name)))
    assert d.flag is S.Flag.CHILD


@pytest.mark.parametrize("name", EXAMPLES)
def test_config_images_run_to_quiescence(name):
    r = run(translate_config(process(name)), MinPriorityFirst(), fuel=2000)
    assert r.outcome in ("terminated", "normal-form"), r.outcome


@pytest.mark.parametrize("name", EXAMPLES)
def test_term_images_run_inside_a_child_thread(name):
    m = translate_term(process(name))
    r = run(S.Thread(S.Flag.CHILD, m), MinPriorityFirst(), fuel=2000)
    assert r.outcome in ("terminated", "normal-form"), r.outcome


def test_translated_configs_reparse_and_still_typecheck():
    for name in EXAMPLES:
        c = translate_config(process(name))
        again = parse_program(config_str(c))
        assert typecheck_config(again).flag is S.Flag.CHILD


def test_translation_is_type_directed():
    # restrictions must carry their annotation: the translation reads the
    # session evolving at each endpoint off the type
    with pytest.raises(TranslateError):
        translate_term(parse_process("(nu x y) x[]. halt | y(). halt"))
    with pytest.raises(TranslateError):
        translate_term(parse_process(
            "(nu x y : 1[0]) x[a]. (a[]. halt) | y(). halt"))


def test_an_ill_typed_process_has_an_ill_typed_image():
    # close/wait translation is oblivious to the annotation, so a process
    # that waits on its close endpoint survives translation; the image is
    # then caught by the term checker
    m = translate_term(parse_process("(nu x y : 1[0]) x(). halt | y[]. halt"))
    from pgv.typecheck import TypeCheckError
    with pytest.raises(TypeCheckError):
        typecheck_term(m)


# -- operational correspondence ------------------------------------------------------

@pytest.mark.parametrize("name", EXAMPLES)
def test_every_process_step_is_matched_by_the_image(name):
    v = check_M_to_C(process(name))
    assert v.ok, v.detail
    assert v.checked >= 1


@pytest.mark.parametrize("name", EXAMPLES)
def test_image_reductions_are_sound(name):
    v = check_soundness(process(name), depth=20)
    assert v.ok, v.detail


@pytest.mark.parametrize("name", EXAMPLES)
def test_process_reductions_are_complete(name):
    v = check_completeness(process(name), depth=20)
    assert v.ok, v.detail


def test_corpus_schedulers_are_covered_by_the_same_checks():
    for path in PCP_CORPUS:
        if not path.name.startswith("sched"):
            continue
        S.reset_fresh()
        p = parse_process(path.read_text(encoding="utf-8"))
        pcp_typecheck(p)
        assert typecheck_config(translate_config(p)).flag is S.Flag.CHILD
        assert check_M_to_C(p).ok


# -- the scheduler identity ----------------------------------------------------------

def test_translated_scheduler_matches_the_handwritten_config():
    from pgv.testkit import pcp_scheduler, pgv_scheduler
    for n in (2, 3):
        S.reset_fresh()
        image = translate_config(pcp_scheduler(n))
        S.reset_fresh()
        hand = pgv_scheduler(n)
        assert congruent(image, hand), n
