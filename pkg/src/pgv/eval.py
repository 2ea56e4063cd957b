"""Small-step evaluation of terms and configurations.

Term reduction is deterministic call-by-value, left to right.  A term
that cannot step is either a value or *ready*: blocked at its focus on
one of the channel operations, waiting for the configuration level to
fire it.

Configurations are evaluated on a flattened "soup" view: all
restrictions hoisted to the top, threads in a flat list (main kept
rightmost).  Rewriting between the nested form and the soup is pure
structural congruence, which the reduction relation absorbs, so steps
on the soup are faithful to steps on configurations.

Step labels:
    E-Lam E-Unit E-Pair E-Inl E-Inr      term reductions
    E-New E-Spawn E-Link E-Send E-Close  configuration reductions
Lifting through contexts, parallel, restriction, and congruence does
not get its own label in traces; steps are reported by the axiom that
fired.

Congruence testing builds a canonical key: threads are sorted by a
name-blind serialisation (main pinned last), restriction-bound names
are numbered by first use, link arguments at the focus may swap, and
threads with identical blind shapes are permuted to find the least
serialisation.  Keys are also used to deduplicate state-space search.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import syntax as S
from .syntax import (
    Absurd, App, Case, Const, Flag, Inl, Inr, Lam, LetPair, Pair, Par, Res,
    Send, Recv, EndS, EndR, Seq, Thread, Unit, Var, fin,
)
from .pretty import config_str, term_str

TERM_RULES = ("E-Lam", "E-Unit", "E-Pair", "E-Inl", "E-Inr")
CONFIG_RULES = ("E-New", "E-Spawn", "E-Link", "E-Send", "E-Close")
LIFT_RULES = ("E-Lift", "E-LiftM", "E-LiftC", "E-LiftSC")
ALL_RULES = TERM_RULES + CONFIG_RULES + LIFT_RULES


class EvalError(Exception):
    pass


class StuckNotNormal(EvalError):
    """A configuration with no enabled steps that is not a normal form."""

    def __init__(self, config, reason: str):
        super().__init__(f"stuck but not in normal form: {reason}\n"
                         f"  {config_str(config)}")
        self.config = config
        self.reason = reason


# -- values, focus, readiness ---------------------------------------------------

def is_value(m) -> bool:
    match m:
        case Var() | Const() | Lam() | Unit():
            return True
        case Pair(a, b):
            return is_value(a) and is_value(b)
        case Inl(v) | Inr(v):
            return is_value(v)
        case _:
            return False


def focus(m):
    """The unique active position of a non-value term.

    Returns (rebuild, sub): `sub` is the subterm in redex position and
    `rebuild(n)` plugs a replacement back in.  Values have no focus.
    """
    if is_value(m):
        return None
    match m:
        case App(fn, arg):
            if not is_value(fn):
                rb, sub = focus(fn)
                return (lambda n, rb=rb, arg=arg: App(rb(n), arg)), sub
            if not is_value(arg):
                rb, sub = focus(arg)
                return (lambda n, rb=rb, fn=fn: App(fn, rb(n))), sub
            return (lambda n: n), m
        case Seq(first, second):
            if not is_value(first):
                rb, sub = focus(first)
                return (lambda n, rb=rb, s=second: Seq(rb(n), s)), sub
            return (lambda n: n), m
        case Pair(a, b):
            if not is_value(a):
                rb, sub = focus(a)
                return (lambda n, rb=rb, b=b: Pair(rb(n), b)), sub
            rb, sub = focus(b)
            return (lambda n, rb=rb, a=a: Pair(a, rb(n))), sub
        case LetPair(x, y, pair, body):
            if not is_value(pair):
                rb, sub = focus(pair)
                return (lambda n, rb=rb: LetPair(x, y, rb(n), body)), sub
            return (lambda n: n), m
        case Inl(v):
            rb, sub = focus(v)
            return (lambda n, rb=rb, a=m.ann: Inl(rb(n), a)), sub
        case Inr(v):
            rb, sub = focus(v)
            return (lambda n, rb=rb, a=m.ann: Inr(rb(n), a)), sub
        case Case(scrutinee, xl, left, xr, right):
            if not is_value(scrutinee):
                rb, sub = focus(scrutinee)
                return (lambda n, rb=rb: Case(rb(n), xl, left, xr, right)), sub
            return (lambda n: n), m
        case Absurd(v):
            if not is_value(v):
                rb, sub = focus(v)
                return (lambda n, rb=rb: Absurd(rb(n))), sub
            return (lambda n: n), m
    raise EvalError(f"not a core term: {m!r}")


def term_step(m):
    """One deterministic term reduction, or None.  Returns (label, term)."""
    spot = focus(m)
    if spot is None:
        return None
    rebuild, sub = spot
    match sub:
        case App(Lam(x, body, _), v) if is_value(v):
            return "E-Lam", rebuild(S.substitute(body, x, v))
        case Seq(Unit(), second):
            return "E-Unit", rebuild(second)
        case LetPair(x, y, Pair(v, w), body) if is_value(v) and is_value(w):
            return "E-Pair", rebuild(
                S.substitute(S.substitute(body, x, v), y, w))
        case Case(Inl(v), xl, left, _, _) if is_value(v):
            return "E-Inl", rebuild(S.substitute(left, xl, v))
        case Case(Inr(v), _, _, xr, right) if is_value(v):
            return "E-Inr", rebuild(S.substitute(right, xr, v))
    return None


@dataclass(frozen=True)
class ReadyAction:
    kind: str                     # new | spawn | link | send | recv | close | wait
    endpoint: Optional[str]       # channel name for send/recv/close/wait
    payload: object = None        # value for send, function for spawn
    partner: Optional[str] = None  # second name for link
    ann: object = None            # session annotation for new


def ready_action(m) -> Optional[ReadyAction]:
    """The communication action a non-value term is blocked on, if any."""
    spot = focus(m)
    if spot is None:
        return None
    _, sub = spot
    match sub:
        case App(Const("new", ann), Unit()):
            return ReadyAction("new", None, ann=ann)
        case App(Const("spawn", _), v) if is_value(v):
            return ReadyAction("spawn", None, payload=v)
        case App(Const("link", _), Pair(Var(a), Var(b))):
            return ReadyAction("link", a, partner=b)
        case App(Const("send", _), Pair(v, Var(x))) if is_value(v):
            return ReadyAction("send", x, payload=v)
        case App(Const("recv", _), Var(x)):
            return ReadyAction("recv", x)
        case App(Const("close", _), Var(x)):
            return ReadyAction("close", x)
        case App(Const("wait", _), Var(x)):
            return ReadyAction("wait", x)
    return None


def is_ready(m) -> bool:
    return ready_action(m) is not None


# -- the soup view ---------------------------------------------------------------

@dataclass
class Restriction:
    x: str
    y: str
    ann: object = None  # session type of x, when known

    def other(self, name: str) -> str:
        return self.y if name == self.x else self.x

    def advance(self) -> "Restriction":
        """Step the annotation past one send/recv exchange."""
        return Restriction(self.x, self.y, getattr(self.ann, "cont", None))

    def head_priority(self):
        if self.ann is None:
            return None
        return self.ann.prio


@dataclass
class Soup:
    restrictions: list
    threads: list  # (Flag, term) pairs; main kept last when present

    def clone(self) -> "Soup":
        return Soup(list(self.restrictions), list(self.threads))

    def restriction_on(self, name: str) -> Optional[int]:
        for i, r in enumerate(self.restrictions):
            if name in (r.x, r.y):
                return i
        return None


def flatten(config) -> Soup:
    """Hoist all restrictions to the top and flatten parallel composition.
    Sound because binders are globally unique (scope extrusion)."""
    restrictions, threads = [], []

    def walk(c):
        match c:
            case Thread(flag, term):
                threads.append((flag, S.elaborate(term)))
            case Par(left, right):
                walk(left)
                walk(right)
            case Res(x, y, body, ann):
                restrictions.append(Restriction(x, y, ann))
                walk(body)
            case _:
                raise EvalError(f"not a configuration: {c!r}")

    walk(config)
    # main thread goes last, like the canonical form
    mains = [t for t in threads if t[0] is Flag.MAIN]
    children = [t for t in threads if t[0] is Flag.CHILD]
    if len(mains) > 1:
        raise EvalError("configuration has two main threads")
    return Soup(restrictions, children + mains)


def to_config(soup: Soup):
    threads = soup.threads or [(Flag.CHILD, Unit())]
    body = Thread(*threads[-1])
    for flag, term in reversed(threads[:-1]):
        body = Par(Thread(flag, term), body)
    for r in reversed(soup.restrictions):
        body = Res(r.x, r.y, body, r.ann)
    return body


def drop_unit_children(soup: Soup) -> None:
    kept = [(f, t) for f, t in soup.threads
            if not (f is Flag.CHILD and t == Unit())]
    soup.threads = kept


def collapse_restricted_links(soup: Soup) -> None:
    """(nu x y)(phi link (x,y))  ==  phi ()   — applied to whole threads."""
    changed = True
    while changed:
        changed = False
        for ti, (flag, term) in enumerate(soup.threads):
            match term:
                case App(Const("link", _), Pair(Var(a), Var(b))):
                    ri = soup.restriction_on(a)
                    if ri is None:
                        continue
                    r = soup.restrictions[ri]
                    if {a, b} == {r.x, r.y}:
                        del soup.restrictions[ri]
                        soup.threads[ti] = (flag, Unit())
                        changed = True
                        break


def congruence_normalize(config):
    """A structurally congruent configuration in flattened shape:
    restrictions on top, finished unit children dropped, isolated
    restricted links collapsed, main thread last."""
    soup = flatten(config)
    collapse_restricted_links(soup)
    drop_unit_children(soup)
    return to_config(soup)


# -- canonical keys / congruence --------------------------------------------------

_PERM_LIMIT = 7


def _serialize(term, number: Callable[[str], str], swap_focus_link: bool) -> str:
    """S-expression of a term with names passed through `number`.  When
    `swap_focus_link` is set, a link at the focus is oriented to the
    lexicographically smaller serialisation (SC-LinkSwap)."""

    link_spot = None
    if swap_focus_link and not is_value(term):
        spot = focus(term)
        if spot is not None:
            match spot[1]:
                case App(Const("link", _), Pair(Var(_), Var(_))):
                    link_spot = spot[1]

    def ser(m):
        match m:
            case Var(x):
                return number(x)
            case Const(kind, _):
                return kind
            case Lam(x, body, _):
                return f"(lam {number(x)} {ser(body)})"
            case App(fn, arg) if m is link_spot:
                a, b = arg.fst.name, arg.snd.name
                one = f"(app link (pair {number(a)} {number(b)}))"
                two = f"(app link (pair {number(b)} {number(a)}))"
                return min(one, two)
            case App(fn, arg):
                return f"(app {ser(fn)} {ser(arg)})"
            case Unit():
                return "unit"
            case Seq(a, b):
                return f"(seq {ser(a)} {ser(b)})"
            case Pair(a, b):
                return f"(pair {ser(a)} {ser(b)})"
            case LetPair(x, y, p, b):
                return f"(split {number(x)} {number(y)} {ser(p)} {ser(b)})"
            case Inl(v):
                return f"(inl {ser(v)})"
            case Inr(v):
                return f"(inr {ser(v)})"
            case Case(s, xl, l, xr, r):
                return (f"(case {ser(s)} {number(xl)} {ser(l)} "
                        f"{number(xr)} {ser(r)})")
            case Absurd(v):
                return f"(absurd {ser(v)})"
        raise EvalError(f"not a core term: {m!r}")

    return ser(term)


def canonical_key(config) -> str:
    """A string equal for structurally congruent configurations.

    Free names are kept literal (congruence cannot rename them);
    restriction-bound and term-bound names are numbered by first use.
    """
    soup = flatten(config)
    collapse_restricted_links(soup)
    drop_unit_children(soup)
    if not soup.threads:
        soup.threads = [(Flag.CHILD, Unit())]

    # congruence works up to alpha renaming of every binder (restriction
    # and term level alike); only names free in the whole configuration
    # must survive literally
    literal = S.config_free_names(to_config(soup))

    def local_key(item):
        flag, term = item
        names = {}

        def number(n):
            if n in literal:
                return f"'{n}"
            if n not in names:
                names[n] = f"#{len(names):04d}"
            return names[n]

        return f"{flag.name.lower()} {_serialize(term, number, True)}"

    mains = [t for t in soup.threads if t[0] is Flag.MAIN]
    children = [t for t in soup.threads if t[0] is Flag.CHILD]
    keyed = sorted(((local_key(t), t) for t in children), key=lambda kt: kt[0])

    # group ties for permutation search
    groups = [list(g) for _, g in itertools.groupby(keyed, key=lambda kt: kt[0])]
    for g in groups:
        if len(g) > _PERM_LIMIT:
            raise EvalError(
                f"too many structurally identical threads ({len(g)}) for "
                f"congruence checking")

    def global_serial(order) -> str:
        names = {}

        def number(n):
            if n in literal:
                return f"'{n}"
            if n not in names:
                names[n] = f"#{len(names):04d}"
            return names[n]

        parts = []
        for flag, term in order:
            parts.append(f"{flag.name.lower()} "
                         f"{_serialize(term, number, True)}")
        pairs = []
        for r in soup.restrictions:
            a = names.get(r.x, "?unused")
            b = names.get(r.y, "?unused")
            pairs.append(f"(res {min(a, b)} {max(a, b)})")
        return " | ".join(parts) + " || " + " ".join(sorted(pairs))

    best = None
    for perm in itertools.product(*(itertools.permutations(g) for g in groups)):
        order = [kt[1] for group in perm for kt in group] + mains
        serial = global_serial(order)
        if best is None or serial < best:
            best = serial
    return best


def congruent(c, d) -> bool:
    """Structural congruence, decided via canonical keys.  Session
    annotations on restrictions are bookkeeping and are ignored."""
    return canonical_key(c) == canonical_key(d)


# -- configuration steps -----------------------------------------------------------

@dataclass
class Step:
    label: str
    threads: tuple           # indices of the threads involved
    names: tuple             # channel names involved, if any
    priority: object         # head priority of the channel, when known
    apply: Callable[[], Soup] = field(compare=False)

    def describe(self) -> str:
        names = f" on {', '.join(self.names)}" if self.names else ""
        return f"{self.label}{names}"


def _set_thread(soup: Soup, i: int, term) -> Soup:
    out = soup.clone()
    out.threads[i] = (out.threads[i][0], term)
    return out


def _payload_type(ann):
    """The type crossing the wire right now, per the restriction's session
    annotation (identical from both endpoints' views)."""
    if ann is None:
        return None
    head = S.expand_session(ann)
    return head.payload if isinstance(head, (S.Send, S.Recv)) else None


def _stamp_wire_type(v, t):
    """Stamp bare injections in a transferred value with their sum type.
    The sender type-checked them against the wire's payload type; carrying
    that type along keeps every intermediate configuration checkable."""
    match v, t:
        case (Inl() | Inr()), S.Sum() if v.ann is None:
            comp = t.left if isinstance(v, Inl) else t.right
            kind = Inl if isinstance(v, Inl) else Inr
            return kind(_stamp_wire_type(v.value, comp), t)
        case Pair(a, b), S.Prod(ta, tb):
            return Pair(_stamp_wire_type(a, ta), _stamp_wire_type(b, tb))
        case _:
            return v


def enabled_steps(soup: Soup) -> list:
    """Every reduction the configuration can make, as Step thunks."""
    steps = []
    focuses = {}
    for i, (flag, term) in enumerate(soup.threads):
        r = term_step(term)
        if r is not None:
            label, new_term = r
            steps.append(Step(label, (i,), (), None,
                              lambda i=i, t=new_term: _set_thread(soup, i, t)))
            continue
        act = ready_action(term)
        if act is not None:
            focuses[i] = act

    for i, act in focuses.items():
        flag, term = soup.threads[i]
        rebuild = focus(term)[0]
        if act.kind == "new":
            def apply_new(i=i, rebuild=rebuild, ann=act.ann):
                x, y = S.fresh("x"), S.fresh("y")
                out = _set_thread(soup, i, rebuild(Pair(Var(x), Var(y))))
                out.restrictions.append(Restriction(x, y, ann))
                return out
            steps.append(Step("E-New", (i,), (), None, apply_new))
        elif act.kind == "spawn":
            def apply_spawn(i=i, rebuild=rebuild, v=act.payload):
                out = _set_thread(soup, i, rebuild(Unit()))
                # the spawned thread runs the value applied to unit
                child = (Flag.CHILD, App(v, Unit()))
                if out.threads and out.threads[-1][0] is Flag.MAIN:
                    out.threads.insert(len(out.threads) - 1, child)
                else:
                    out.threads.append(child)
                return out
            steps.append(Step("E-Spawn", (i,), (), None, apply_spawn))
        elif act.kind == "link":
            seen = set()
            for a, b in ((act.endpoint, act.partner),
                         (act.partner, act.endpoint)):
                ri = soup.restriction_on(b)
                if ri is None or ri in seen:
                    continue
                seen.add(ri)
                r = soup.restrictions[ri]
                w, gone = a, r.other(b)

                def apply_link(i=i, rebuild=rebuild, ri=ri, w=w, gone=gone):
                    out = _set_thread(soup, i, rebuild(Unit()))
                    del out.restrictions[ri]
                    if w != gone:
                        out.threads = [
                            (f, t) if j == i else (f, S.rename(t, gone, w))
                            for j, (f, t) in enumerate(out.threads)]
                    return out
                steps.append(Step("E-Link", (i,), (w, b), None, apply_link))
        elif act.kind == "send":
            ri = soup.restriction_on(act.endpoint)
            if ri is None:
                continue
            r = soup.restrictions[ri]
            peer = r.other(act.endpoint)
            wire = _payload_type(r.ann)
            for j, pact in focuses.items():
                if j != i and pact.kind == "recv" and pact.endpoint == peer:
                    def apply_send(i=i, j=j, ri=ri, act=act, peer=peer,
                                   wire=wire):
                        out = soup.clone()
                        rb_i = focus(out.threads[i][1])[0]
                        rb_j = focus(out.threads[j][1])[0]
                        sent = _stamp_wire_type(act.payload, wire)
                        out.threads[i] = (out.threads[i][0],
                                          rb_i(Var(act.endpoint)))
                        out.threads[j] = (out.threads[j][0],
                                          rb_j(Pair(sent, Var(peer))))
                        out.restrictions[ri] = out.restrictions[ri].advance()
                        return out
                    steps.append(Step("E-Send", (i, j),
                                      (act.endpoint, peer),
                                      r.head_priority(), apply_send))
        elif act.kind == "close":
            ri = soup.restriction_on(act.endpoint)
            if ri is None:
                continue
            r = soup.restrictions[ri]
            peer = r.other(act.endpoint)
            for j, pact in focuses.items():
                if j != i and pact.kind == "wait" and pact.endpoint == peer:
                    def apply_close(i=i, j=j, ri=ri):
                        out = soup.clone()
                        rb_i = focus(out.threads[i][1])[0]
                        rb_j = focus(out.threads[j][1])[0]
                        out.threads[i] = (out.threads[i][0], rb_i(Unit()))
                        out.threads[j] = (out.threads[j][0], rb_j(Unit()))
                        del out.restrictions[ri]
                        return out
                    steps.append(Step("E-Close", (i, j),
                                      (act.endpoint, peer),
                                      r.head_priority(), apply_close))
    return steps


# -- normal forms --------------------------------------------------------------------

def _blocked_children_match(soup: Soup, children) -> bool:
    """Injective matching of blocked children onto their restrictions."""
    options = []
    for _, term in children:
        act = ready_action(term)
        if act is None or act.kind not in ("send", "recv", "close", "wait"):
            return False
        ri = soup.restriction_on(act.endpoint)
        if ri is None:
            return False
        options.append(ri)
    # injectivity: children blocked on distinct restrictions
    used = set()

    def assign(k):
        if k == len(options):
            return True
        ri = options[k]
        if ri in used:
            return False
        used.add(ri)
        if assign(k + 1):
            return True
        used.discard(ri)
        return False

    return assign(0)


def is_canonical_form(config) -> bool:
    soup = flatten(config)
    if any(f is Flag.CHILD and is_value(t) for f, t in soup.threads):
        return False
    mains = [t for f, t in soup.threads if f is Flag.MAIN]
    return len(mains) <= 1


def is_normal_form(config) -> bool:
    """Normal: children each blocked on a distinct restricted channel and,
    when a main thread exists, its term fully reduced to a value."""
    soup = flatten(config)
    collapse_restricted_links(soup)
    drop_unit_children(soup)
    mains = [(f, t) for f, t in soup.threads if f is Flag.MAIN]
    children = [(f, t) for f, t in soup.threads if f is Flag.CHILD]
    if mains and not is_value(mains[0][1]):
        return False
    return _blocked_children_match(soup, children)


def is_terminated(config) -> bool:
    """Everything finished: a main thread holding a value with no
    leftover children, or (child-only) nothing but finished units."""
    soup = flatten(config)
    collapse_restricted_links(soup)
    drop_unit_children(soup)
    mains = [(f, t) for f, t in soup.threads if f is Flag.MAIN]
    children = [(f, t) for f, t in soup.threads if f is Flag.CHILD]
    if mains:
        return is_value(mains[0][1]) and not children
    return not children


# -- policies and driving ---------------------------------------------------------------

class MinPriorityFirst:
    """Deterministic: term steps first (lowest thread index), then
    thread administration (new/spawn/link), then communications ordered
    by the channel's head priority."""

    name = "min-priority"

    def choose(self, steps):
        order = {label: 0 for label in TERM_RULES}
        order.update({"E-New": 1, "E-Spawn": 1, "E-Link": 1,
                      "E-Send": 2, "E-Close": 2})

        def key(s):
            prio = s.priority if s.priority is not None else float("inf")
            return (order[s.label], prio if order[s.label] == 2 else 0,
                    s.threads)
        return min(steps, key=key)


class SeededRandom:
    """Uniform choice among enabled steps from a fixed seed."""

    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.name = f"random:{seed}"

    def choose(self, steps):
        return self.rng.choice(steps)


@dataclass
class TraceStep:
    label: str
    threads: tuple
    names: tuple
    config: str

    def as_dict(self):
        return {"rule": self.label, "threads": list(self.threads),
                "names": list(self.names), "config": self.config}


@dataclass
class RunResult:
    outcome: str          # "terminated" | "normal-form" | "fuel-exhausted"
    config: object        # final configuration (normalized)
    value: object         # main thread's value when terminated, else None
    steps: int
    trace: list

    @property
    def rules_used(self):
        return [t.label for t in self.trace]


def run(config, policy=None, fuel: int = 10_000, keep_trace: bool = True) -> RunResult:
    """Drive a configuration to the end, raising StuckNotNormal if it
    jams in a shape that is not a normal form."""
    policy = policy or MinPriorityFirst()
    soup = flatten(config)
    trace = []
    for n in range(fuel):
        steps = enabled_steps(soup)
        if not steps:
            final = congruence_normalize(to_config(soup))
            if is_terminated(final):
                fsoup = flatten(final)
                mains = [t for f, t in fsoup.threads if f is Flag.MAIN]
                value = mains[0] if mains else Unit()
                return RunResult("terminated", final, value, n, trace)
            if is_normal_form(final):
                return RunResult("normal-form", final, None, n, trace)
            blocked = []
            for f, t in flatten(final).threads:
                if f is Flag.CHILD and is_value(t) and t != Unit():
                    blocked.append(f"child finished with non-unit value "
                                   f"{term_str(t)}")
                elif not is_value(t) and ready_action(t) is None \
                        and term_step(t) is None:
                    blocked.append(f"thread wedged at {term_str(t)}")
            act_names = []
            for f, t in flatten(final).threads:
                act = ready_action(t)
                if act is not None and act.endpoint is not None:
                    where = "restricted" \
                        if flatten(final).restriction_on(act.endpoint) is not None \
                        else "free"
                    act_names.append(
                        f"{act.kind} on {where} endpoint {act.endpoint}")
            reason = "; ".join(blocked + act_names) or "no reducible thread"
            raise StuckNotNormal(final, reason)
        chosen = policy.choose(steps)
        soup = chosen.apply()
        if keep_trace:
            trace.append(TraceStep(chosen.label, chosen.threads, chosen.names,
                                   config_str(to_config(soup))))
    return RunResult("fuel-exhausted", congruence_normalize(to_config(soup)),
                     None, fuel, trace)


def explore(config, depth: int = 20, max_states: int = 20_000):
    """Breadth-first state space up to `depth` steps.

    Returns (states, edges, terminals): states maps canonical keys to a
    representative configuration; edges is a list of (key, label, key);
    terminals is the set of keys with no outgoing step.
    """
    start = to_config(flatten(config))
    key0 = canonical_key(start)
    states = {key0: start}
    edges = []
    terminals = set()
    frontier = [(key0, flatten(config))]
    for _ in range(depth):
        next_frontier = []
        for key, soup in frontier:
            steps = enabled_steps(soup)
            if not steps:
                terminals.add(key)
                continue
            for st in steps:
                out = st.apply()
                cfg = to_config(out)
                k2 = canonical_key(cfg)
                edges.append((key, st.label, k2))
                if k2 not in states:
                    if len(states) >= max_states:
                        raise EvalError("state space exceeds the exploration budget")
                    states[k2] = cfg
                    next_frontier.append((k2, out))
        frontier = next_frontier
        if not frontier:
            break
    return states, edges, terminals
