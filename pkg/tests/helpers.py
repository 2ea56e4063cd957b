"""Shared plumbing for the test suite: corpus paths, hypothesis strategies
over the type grammars, and a reduction driver that retypechecks after every
step (the workhorse behind the subject-reduction suites)."""

from __future__ import annotations

from pathlib import Path

from hypothesis import strategies as st

import pgv.syntax as S
import pgv.pcp as P
from pgv.eval import enabled_steps, flatten, to_config
from pgv.typecheck import typecheck_config

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"

PCP_CORPUS = sorted(CORPUS.glob("*.pcp"))
PGV_CORPUS = sorted(CORPUS.glob("*.pgv"))


def corpus(name: str) -> str:
    return (CORPUS / name).read_text(encoding="utf-8")


# -- hypothesis strategies -------------------------------------------------------

_PRIOS = st.integers(min_value=0, max_value=9)


def session_types() -> st.SearchStrategy:
    """Arbitrary session types (not necessarily well-formed: duality,
    printing and expansion are syntactic and must hold regardless)."""
    base = st.builds(S.EndS, _PRIOS) | st.builds(S.EndR, _PRIOS)

    def extend(inner):
        payload = st.builds(S.Sess, inner) | st.just(S.UnitT())
        return st.one_of(
            st.builds(S.Send, _PRIOS, payload, inner),
            st.builds(S.Recv, _PRIOS, payload, inner),
            st.builds(S.SelectS, _PRIOS, st.tuples(inner, inner)),
            st.builds(S.OfferS, _PRIOS, st.tuples(inner, inner)),
            st.builds(S.SelectS, _PRIOS, st.just(())),
            st.builds(S.OfferS, _PRIOS, st.just(())),
        )

    return st.recursive(base, extend, max_leaves=8)


def value_types() -> st.SearchStrategy:
    base = (st.just(S.UnitT()) | st.just(S.VoidT())
            | st.builds(S.Sess, session_types()))

    def extend(inner):
        bound = st.one_of(st.just(S.TOP), st.just(S.BOT),
                          st.builds(S.fin, _PRIOS))
        return st.one_of(
            st.builds(S.Prod, inner, inner),
            st.builds(S.Sum, inner, inner),
            st.builds(S.Fn, bound, bound, inner, inner),
        )

    return st.recursive(base, extend, max_leaves=6)


def pcp_types() -> st.SearchStrategy:
    """Arbitrary process types; duality and printing are syntactic."""
    base = st.builds(P.CloseT, _PRIOS) | st.builds(P.WaitT, _PRIOS)

    def extend(inner):
        return st.one_of(
            st.builds(P.Out, _PRIOS, inner, inner),
            st.builds(P.In, _PRIOS, inner, inner),
            st.builds(P.Choice, _PRIOS, st.tuples(inner, inner)),
            st.builds(P.Branch, _PRIOS, st.tuples(inner, inner)),
            st.builds(P.Choice, _PRIOS, st.just(())),
            st.builds(P.Branch, _PRIOS, st.just(())),
        )

    return st.recursive(base, extend, max_leaves=8)


# -- reduction with per-step retypechecking --------------------------------------

def run_retypechecking(config, policy, fuel: int = 5000):
    """Step `config` to quiescence under `policy`, retypechecking the whole
    configuration after every step.  Returns (final configuration, number
    of steps).  Any TypeCheckError propagates to the caller."""
    soup = flatten(config)
    for n in range(fuel):
        steps = enabled_steps(soup)
        if not steps:
            return to_config(soup), n
        soup = policy.choose(steps).apply()
        typecheck_config(to_config(soup))
    raise AssertionError(f"no quiescence within {fuel} steps")
