"""Compiling processes into the session-typed functional language.

Types map connective by connective: an output type becomes a send whose
payload is the *dual* of the component (the sender ships the peer end
and keeps its own), an input becomes a receive, closing/waiting become
the two finished-session types, and the choices become the selection
and offer sugar.

Processes translate twice:

* `translate_term` produces one functional term that performs the whole
  process: restrictions allocate channels, parallel composition spawns,
  prefixes run their channel operation and continue.

* `translate_config` produces a configuration, keeping the process's
  parallel structure as threads and restrictions.  For an output or a
  selection prefix the channel the operation would allocate at runtime
  is materialised up front as a restriction around the thread; for
  everything else it wraps the term translation in a child thread.

The translation is type-directed (payload types come from the channel's
type), so it consumes the same annotations the process checker needs.

The correspondence checkers compare, up to structural congruence, how
the two images reduce: the term image must catch up with the
configuration image; every configuration step must be explainable by
process steps (soundness); and every process step must be replayable by
configuration steps (completeness).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import pcp as P
from . import syntax as S
from .eval import canonical_key, enabled_steps, flatten, to_config
from .pcp import (
    Branch, Choice, CloseT, In, Out, WaitT,
    pcp_canonical_key, pcp_dual, pcp_enabled_steps, process_to_soup,
    soup_to_process,
)
from .syntax import (
    App, Const, Flag, Inl, Inr, Let, LamUnit, LetPair, Offer, Pair, Par, Res,
    Seq, Thread, Unit, Var, fresh,
)
from .typecheck import MISMATCH, NO_ANNOTATION


class TranslateError(Exception):
    pass


def translate_type(a: P.PcpType) -> S.SessionType:
    match a:
        case Out(o, pay, cont):
            return S.Send(o, S.Sess(S.dual(translate_type(pay))),
                          translate_type(cont))
        case In(o, pay, cont):
            return S.Recv(o, S.Sess(translate_type(pay)),
                          translate_type(cont))
        case CloseT(o):
            return S.EndS(o)
        case WaitT(o):
            return S.EndR(o)
        case Choice(o, bs):
            return S.SelectS(o, tuple(translate_type(b) for b in bs))
        case Branch(o, bs):
            return S.OfferS(o, tuple(translate_type(b) for b in bs))
    raise TranslateError(f"not a process type: {a!r}")


def _image(a: P.PcpType) -> S.SessionType:
    """Translate and expand choice sugar: annotations inside terms and
    configurations must be in the core grammar the checker and the
    evaluator work over (the parser expands sugar the same way)."""
    return S.expand_session(translate_type(a))


class _Names:
    """Current functional-language name for each process channel.  A
    prefix that keeps using its channel rebinds it, so the map threads
    through the walk."""

    def __init__(self, env: dict):
        self.types = dict(env)   # current name -> process type
        self.map = {}            # process name -> current name

    def now(self, x: str) -> str:
        return self.map.get(x, x)

    def type_of(self, x: str) -> P.PcpType:
        cur = self.now(x)
        if cur not in self.types:
            raise TranslateError(
                f"[{MISMATCH}] channel {x} has no known type to translate")
        return self.types[cur]

    def rebind(self, x: str, t: P.PcpType) -> str:
        cur = fresh(self.now(x))
        self.map[x] = cur
        self.types[cur] = t
        return cur

    def bind(self, x: str, t: P.PcpType) -> None:
        self.map.pop(x, None)
        self.types[x] = t

    def scoped(self) -> "_Names":
        out = _Names({})
        out.types = dict(self.types)
        out.map = dict(self.map)
        return out


def translate_term(p: P.Process, env: Optional[dict] = None) -> S.Term:
    """The whole process as a single term of unit type."""
    return _term(P.desugar(p), _Names(env or {}))


def _term(p: P.Process, names: _Names) -> S.Term:
    match p:
        case P.Link(a, b):
            return App(Const("link"),
                       Pair(Var(names.now(a)), Var(names.now(b))))
        case P.Res(x, y, body, ann):
            if ann is None:
                raise TranslateError(
                    f"[{NO_ANNOTATION}] restriction (nu {x} {y}) needs a "
                    f"type annotation to translate")
            names.bind(x, ann)
            names.bind(y, pcp_dual(ann))
            return LetPair(x, y,
                           App(Const("new", _image(ann)), Unit()),
                           _term(body, names))
        case P.Par(l, r):
            return Seq(App(Const("spawn"), LamUnit(_term(l, names.scoped()))),
                       _term(r, names))
        case P.Halt():
            return Unit()
        case P.Close(c, body):
            return Seq(App(Const("close"), Var(names.now(c))),
                       _term(body, names))
        case P.Wait(c, body):
            return Seq(App(Const("wait"), Var(names.now(c))),
                       _term(body, names))
        case P.Send(c, kept, body):
            t = names.type_of(c)
            if not isinstance(t, Out):
                raise TranslateError(
                    f"[{MISMATCH}] {c} : {P.pcp_type_str(t)} cannot send")
            cur = names.now(c)
            z = fresh(kept)
            names.bind(kept, t.payload)
            new_c = names.rebind(c, t.cont)
            return LetPair(
                kept, z,
                App(Const("new", _image(t.payload)), Unit()),
                Let(new_c,
                    App(Const("send"), Pair(Var(z), Var(cur))),
                    _term(body, names)))
        case P.Recv(c, binder, body):
            t = names.type_of(c)
            if not isinstance(t, In):
                raise TranslateError(
                    f"[{MISMATCH}] {c} : {P.pcp_type_str(t)} cannot receive")
            cur = names.now(c)
            names.bind(binder, t.payload)
            new_c = names.rebind(c, t.cont)
            return LetPair(binder, new_c,
                           App(Const("recv"), Var(cur)),
                           _term(body, names))
        case P.SelectL(c, body) | P.SelectR(c, body):
            t = names.type_of(c)
            if not (isinstance(t, Choice) and len(t.branches) == 2):
                raise TranslateError(
                    f"[{MISMATCH}] {c} : {P.pcp_type_str(t)} offers no "
                    f"choice to make")
            left = isinstance(p, P.SelectL)
            picked = t.branches[0 if left else 1]
            cur = names.now(c)
            new_c = names.rebind(c, picked)
            const = Const("select_inl" if left else "select_inr",
                          _image(picked))
            return Let(new_c, App(const, Var(cur)), _term(body, names))
        case P.Offer(c, pl, pr_):
            t = names.type_of(c)
            if not (isinstance(t, Branch) and len(t.branches) == 2):
                raise TranslateError(
                    f"[{MISMATCH}] {c} : {P.pcp_type_str(t)} offers no "
                    f"branches")
            cur = names.now(c)
            ln = names.scoped()
            xl = ln.rebind(c, t.branches[0])
            rn = names.scoped()
            xr = rn.rebind(c, t.branches[1])
            return Offer(Var(cur), (xl, _term(pl, ln), xr, _term(pr_, rn)))
        case P.OfferNone(c):
            return Offer(Var(names.now(c)), None)
    raise TranslateError(f"not a process: {p!r}")


def translate_config(p: P.Process, env: Optional[dict] = None) -> S.Configuration:
    """The process as a configuration of child threads."""
    return _config(P.desugar(p), _Names(env or {}))


def _config(p: P.Process, names: _Names) -> S.Configuration:
    match p:
        case P.Res(x, y, body, ann):
            if ann is None:
                raise TranslateError(
                    f"[{NO_ANNOTATION}] restriction (nu {x} {y}) needs a "
                    f"type annotation to translate")
            names.bind(x, ann)
            names.bind(y, pcp_dual(ann))
            return Res(x, y, _config(body, names), _image(ann))
        case P.Par(l, r):
            return Par(_config(l, names.scoped()), _config(r, names))
        case P.Send(c, kept, body):
            # the channel this output would allocate is materialised now
            t = names.type_of(c)
            if not isinstance(t, Out):
                raise TranslateError(
                    f"[{MISMATCH}] {c} : {P.pcp_type_str(t)} cannot send")
            cur = names.now(c)
            z = fresh(kept)
            names.bind(kept, t.payload)
            new_c = names.rebind(c, t.cont)
            term = Let(new_c,
                       App(Const("send"), Pair(Var(z), Var(cur))),
                       _term(body, names))
            return Res(kept, z, Thread(Flag.CHILD, term),
                       _image(t.payload))
        case P.SelectL(c, body) | P.SelectR(c, body):
            t = names.type_of(c)
            if not (isinstance(t, Choice) and len(t.branches) == 2):
                raise TranslateError(
                    f"[{MISMATCH}] {c} : {P.pcp_type_str(t)} offers no "
                    f"choice to make")
            left = isinstance(p, P.SelectL)
            picked = t.branches[0 if left else 1]
            cur = names.now(c)
            y, z = fresh("y"), fresh("z")
            new_c = names.rebind(c, picked)
            inj = Inl(Var(y)) if left else Inr(Var(y))
            term = Let(new_c,
                       Seq(App(Const("close"),
                               App(Const("send"), Pair(inj, Var(cur)))),
                           Var(z)),
                       _term(body, names))
            return Res(y, z, Thread(Flag.CHILD, term),
                       S.dual(_image(picked)))
        case _:
            return Thread(Flag.CHILD, _term(p, names))


# -- operational correspondence ---------------------------------------------------
#
# In a translated configuration every thread is a value or is stopped at
# a communication: restrictions and spawns are part of the configuration
# structure, so no administrative work is left.  Administrative steps
# (pure term steps plus channel creation and spawning) are confluent and
# terminating — the language has no recursion — so every configuration
# has a unique administrative normal form, and searches can work
# communication by communication, normalising in between.


@dataclass
class Verdict:
    ok: bool
    detail: str
    checked: int = 0

    def __bool__(self):
        return self.ok


_ADMIN = frozenset(
    {"E-Lam", "E-Unit", "E-Pair", "E-Inl", "E-Inr", "E-New", "E-Spawn"})


def _admin_nf(soup, limit: int = 100_000):
    """Run administrative steps to exhaustion."""
    for _ in range(limit):
        st = next((s for s in enabled_steps(soup) if s.label in _ADMIN), None)
        if st is None:
            return soup
        soup = st.apply()
    raise TranslateError("administrative reduction did not terminate")


def _comm_closure(config, target_keys, depth: int,
                  at_least_one: bool = False):
    """Search over communication macro-steps (one communication, then
    administrative normalisation) for any of `target_keys`.  Returns the
    number of communications used, or None."""
    start = _admin_nf(flatten(config))
    if not at_least_one and canonical_key(to_config(start)) in target_keys:
        return 0
    seen = {canonical_key(to_config(start))}
    frontier = [start]
    for comms in range(1, depth + 1):
        nxt = []
        for soup in frontier:
            for st in enabled_steps(soup):
                if st.label in _ADMIN:
                    continue
                out = _admin_nf(st.apply())
                key = canonical_key(to_config(out))
                if key in target_keys:
                    return comms
                if key not in seen:
                    seen.add(key)
                    nxt.append(out)
        frontier = nxt
        if not frontier:
            break
    return None


def check_M_to_C(p: P.Process, env: Optional[dict] = None) -> Verdict:
    """The term image, run as a child thread, either already is the
    configuration image or reduces to it — and in that case every first
    step keeps it reachable."""
    m_side = Thread(Flag.CHILD, translate_term(p, env))
    c_side = translate_config(p, env)
    key_c = canonical_key(c_side)
    if canonical_key(m_side) == key_c:
        return Verdict(True, "images are congruent outright")
    first = enabled_steps(flatten(m_side))
    if not first:
        return Verdict(False, "term image is inert but differs from the "
                              "configuration image")
    for st in first:
        if st.label not in _ADMIN:
            return Verdict(
                False,
                f"term image starts with a communication ({st.label}) "
                f"that the configuration image has not done")
        out = _admin_nf(st.apply())
        if canonical_key(to_config(out)) != key_c:
            return Verdict(
                False,
                f"after {st.label} the term image settles at a different "
                f"configuration than the configuration image")
    return Verdict(True,
                   f"term image rejoins the configuration image from all "
                   f"{len(first)} first step(s)", checked=len(first))


def _pcp_reducts(p: P.Process, depth: int):
    """All processes reachable in 1..depth steps, as soups."""
    start = process_to_soup(p)
    seen = {pcp_canonical_key(soup_to_process(start))}
    frontier = [start]
    out = []
    for _ in range(depth):
        nxt = []
        for soup in frontier:
            for st in pcp_enabled_steps(soup):
                after = st.apply()
                key = pcp_canonical_key(soup_to_process(after))
                if key not in seen:
                    seen.add(key)
                    nxt.append(after)
                    out.append(after)
        frontier = nxt
        if not frontier:
            break
    return out


def check_soundness(p: P.Process, env: Optional[dict] = None,
                    depth: int = 20) -> Verdict:
    """Every first step of the configuration image is explained by the
    process: the image of some process reduct stays reachable."""
    c_side = translate_config(p, env)
    reducts = _pcp_reducts(p, depth)
    target_keys = set()
    for soup in reducts:
        q = soup_to_process(soup)
        target_keys.add(canonical_key(translate_config(q, env)))
    steps = [st for st in enabled_steps(_admin_nf(flatten(c_side)))]
    if not steps:
        return Verdict(True, "configuration image has no steps", checked=0)
    if not target_keys:
        return Verdict(False, "configuration image steps but the process "
                              "has no reductions")
    for st in steps:
        got = _comm_closure(to_config(_admin_nf(st.apply())), target_keys,
                            depth)
        if got is None:
            return Verdict(
                False,
                f"config step {st.label} cannot catch up with the image "
                f"of any process reduct (depth {depth})")
    return Verdict(True,
                   f"all {len(steps)} first step(s) rejoin a translated "
                   f"reduct", checked=len(steps))


def check_completeness(p: P.Process, env: Optional[dict] = None,
                       depth: int = 20) -> Verdict:
    """Every process step is replayed by the configuration image in one
    or more steps."""
    c_side = translate_config(p, env)
    steps = pcp_enabled_steps(process_to_soup(p))
    if not steps:
        return Verdict(True, "process has no reductions", checked=0)
    for st in steps:
        q = soup_to_process(st.apply())
        key_q = canonical_key(translate_config(q, env))
        got = _comm_closure(c_side, {key_q}, depth, at_least_one=True)
        if got is None:
            return Verdict(
                False,
                f"process step {st.label} is not replayed by the "
                f"configuration image within {depth} communications")
    return Verdict(True,
                   f"all {len(steps)} process step(s) replayed",
                   checked=len(steps))
