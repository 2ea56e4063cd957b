"""Abstract syntax for a linear functional session calculus with priorities.

The language has two layers:

  * session types / value types, every connective carrying a priority
    (a natural number) that says *when* the communication it describes
    may fire — lower fires earlier;
  * terms (a linear lambda calculus with communication constants) and
    runtime configurations (threads, parallel composition, channel
    restriction).

Priorities are ordinary ints.  Priority *bounds* (used by the
typechecker to summarise which communications a term may perform) live
in the lattice  bot < 0 < 1 < ... < top,  implemented by `Bound`.

Binders are kept globally unique (Barendregt convention): the parser
and all internal constructions draw on `fresh`, so substitution never
needs to rename.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union


# ---------------------------------------------------------------------------
# fresh names
# ---------------------------------------------------------------------------

_counter = 0


def fresh(hint: str = "x") -> str:
    """Return a globally fresh name; `hint` is kept as a readable stem."""
    global _counter
    _counter += 1
    base = hint.split("~")[0] if "~" in hint else hint
    return f"{base}~{_counter}"


def reset_fresh() -> None:
    """Reset the fresh-name counter (tests and CLI entry points only)."""
    global _counter
    _counter = 0


# ---------------------------------------------------------------------------
# priorities and priority bounds
# ---------------------------------------------------------------------------

Priority = int


@dataclass(frozen=True)
class Hole:
    """A priority left open in a skeleton, to be filled by annotation search."""

    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


PriorityLike = Union[int, Hole]


@dataclass(frozen=True, order=True)
class Bound:
    """An element of the bound lattice  bot < 0 < 1 < ... < top.

    `level` is -1 for bot, +1 for top, 0 for a finite priority held in `n`.
    The derived ordering on (level, n) is exactly the lattice order, so
    min/max implement meet/join.
    """

    level: int
    n: int = 0

    def __repr__(self) -> str:
        if self.level < 0:
            return "bot"
        if self.level > 0:
            return "top"
        return str(self.n)

    @property
    def is_fin(self) -> bool:
        return self.level == 0

    @property
    def is_bot(self) -> bool:
        return self.level < 0

    @property
    def is_top(self) -> bool:
        return self.level > 0


BOT = Bound(-1)
TOP = Bound(1)


def fin(n: int) -> Bound:
    if isinstance(n, Hole):
        raise ValueError(f"unfilled priority hole ?{n.name}")
    if n < 0:
        raise ValueError(f"priorities are naturals, got {n}")
    return Bound(0, n)


def join(*bs: Bound) -> Bound:
    """Least upper bound; join of nothing is bot."""
    out = BOT
    for b in bs:
        if b > out:
            out = b
    return out


def meet(*bs: Bound) -> Bound:
    """Greatest lower bound; meet of nothing is top."""
    out = TOP
    for b in bs:
        if b < out:
            out = b
    return out


# ---------------------------------------------------------------------------
# session types and value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    """Output at `prio`: send a `payload`, continue as `cont`."""

    prio: PriorityLike
    payload: "Type"
    cont: "SessionType"


@dataclass(frozen=True)
class Recv:
    """Input at `prio`: receive a `payload`, continue as `cont`."""

    prio: PriorityLike
    payload: "Type"
    cont: "SessionType"


@dataclass(frozen=True)
class EndS:
    """Session end, this side closes, at `prio`."""

    prio: PriorityLike


@dataclass(frozen=True)
class EndR:
    """Session end, this side waits for the close, at `prio`."""

    prio: PriorityLike


SessionType = Union[Send, Recv, EndS, EndR]


@dataclass(frozen=True)
class SelectS:
    """Sugar: internal-choice session type at `prio` over 0 or 2 branches."""

    prio: PriorityLike
    branches: tuple  # () or (SessionType, SessionType)


@dataclass(frozen=True)
class OfferS:
    """Sugar: external-choice session type at `prio` over 0 or 2 branches."""

    prio: PriorityLike
    branches: tuple


@dataclass(frozen=True)
class Prod:
    fst: "Type"
    snd: "Type"


@dataclass(frozen=True)
class UnitT:
    pass


@dataclass(frozen=True)
class Sum:
    left: "Type"
    right: "Type"


@dataclass(frozen=True)
class VoidT:
    pass


@dataclass(frozen=True)
class Fn:
    """Linear function space annotated with bounds [p, q].

    p is a lower bound on the priorities the caller's remaining
    environment may use (the function closes over names at least that
    early); q is an upper bound on the communications the body performs.
    """

    p: Bound
    q: Bound
    dom: "Type"
    cod: "Type"


@dataclass(frozen=True)
class Sess:
    session: SessionType


Type = Union[Prod, UnitT, Sum, VoidT, Fn, Sess]


def expand_session(s) -> SessionType:
    """Expand choice sugar into its send/receive encoding.

    A selection at o over branches S, S' becomes an output of the sum of
    the *dualised* branches followed by a close at o+1; an offer is the
    mirror image without dualisation.  Empty choices use the empty type.
    """
    if isinstance(s, SelectS):
        o = s.prio
        if isinstance(o, Hole):
            raise ValueError("cannot expand choice sugar on a priority hole")
        if s.branches == ():
            payload: Type = VoidT()
        else:
            l, r = s.branches
            payload = Sum(Sess(dual(expand_session(l))), Sess(dual(expand_session(r))))
        return Send(o, payload, EndS(o + 1))
    if isinstance(s, OfferS):
        o = s.prio
        if isinstance(o, Hole):
            raise ValueError("cannot expand choice sugar on a priority hole")
        if s.branches == ():
            payload = VoidT()
        else:
            l, r = s.branches
            payload = Sum(Sess(expand_session(l)), Sess(expand_session(r)))
        return Recv(o, payload, EndR(o + 1))
    if isinstance(s, (Send, Recv)):
        return type(s)(s.prio, expand_type(s.payload), expand_session(s.cont))
    return s


def expand_type(t: Type) -> Type:
    if isinstance(t, Prod):
        return Prod(expand_type(t.fst), expand_type(t.snd))
    if isinstance(t, Sum):
        return Sum(expand_type(t.left), expand_type(t.right))
    if isinstance(t, Fn):
        return Fn(t.p, t.q, expand_type(t.dom), expand_type(t.cod))
    if isinstance(t, Sess):
        return Sess(expand_session(t.session))
    return t


def dual(s: SessionType) -> SessionType:
    """Flip the direction of every action; payloads and priorities stay put.

    Choice sugar dualises its branches: the expansion of a selection
    dualises branch payloads while the expansion of an offer does not,
    so flipping one into the other must flip the branches to keep
    `dual . expand == expand . dual`.
    """
    match s:
        case Send(o, t, c):
            return Recv(o, t, dual(c))
        case Recv(o, t, c):
            return Send(o, t, dual(c))
        case EndS(o):
            return EndR(o)
        case EndR(o):
            return EndS(o)
        case SelectS(o, bs):
            return OfferS(o, tuple(dual(b) for b in bs))
        case OfferS(o, bs):
            return SelectS(o, tuple(dual(b) for b in bs))
    raise TypeError(f"not a session type: {s!r}")


def pr(s: SessionType) -> Bound:
    """Priority of the top-most connective of a session type."""
    return fin(s.prio)


def minpr(t) -> Bound:
    """Smallest priority occurring in a type (top for data with no actions).

    On a session type this equals the priority of its head connective —
    the well-formedness invariant below keeps heads minimal.
    """
    match t:
        case Prod(a, b) | Sum(left=a, right=b):
            return meet(minpr(a), minpr(b))
        case UnitT() | VoidT():
            return TOP
        case Fn(p, _, _, _):
            return p
        case Sess(s):
            return pr(s)
    raise TypeError(f"not a type: {t!r}")


def minpr_env(bindings) -> Bound:
    """minpr of a whole environment (an iterable of (name, Type))."""
    return meet(*(minpr(t) for _, t in bindings))


def session_priorities(s: SessionType):
    """All priorities reachable in a session type, head first."""
    out = [s.prio]
    if isinstance(s, (Send, Recv)):
        out += type_priorities(s.payload)
        out += session_priorities(s.cont)
    return out


def type_priorities(t: Type):
    match t:
        case Prod(a, b) | Sum(left=a, right=b):
            return type_priorities(a) + type_priorities(b)
        case UnitT() | VoidT():
            return []
        case Fn(_, _, d, c):
            return type_priorities(d) + type_priorities(c)
        case Sess(s):
            return session_priorities(s)
    raise TypeError(f"not a type: {t!r}")


def well_formed_session(s: SessionType) -> bool:
    """Check the head-minimality invariant at every session position:
    the top-most connective holds the smallest priority in the type.
    """
    prios = session_priorities(s)
    if any(isinstance(p, Hole) for p in prios):
        return True  # skeletons are validated after the holes are filled
    if prios[0] != min(prios):
        return False
    if isinstance(s, (Send, Recv)):
        return well_formed_type(s.payload) and well_formed_session(s.cont)
    return True


def well_formed_type(t: Type) -> bool:
    match t:
        case Prod(a, b) | Sum(left=a, right=b):
            return well_formed_type(a) and well_formed_type(b)
        case UnitT() | VoidT():
            return True
        case Fn(_, _, d, c):
            return well_formed_type(d) and well_formed_type(c)
        case Sess(s):
            return well_formed_session(s)
    raise TypeError(f"not a type: {t!r}")


# ---------------------------------------------------------------------------
# terms
# ---------------------------------------------------------------------------

# Core communication constants, plus sugar constants removed by `elaborate`.
CORE_CONSTANTS = ("link", "new", "spawn", "send", "recv", "close", "wait")
SUGAR_CONSTANTS = ("fork", "select_inl", "select_inr")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    """A communication constant.  `ann` optionally pins the session type
    the constant is instantiated at; `new` needs it to typecheck (nothing
    about the unit argument determines the session), the others infer it
    from their argument."""

    kind: str
    ann: Optional[SessionType] = None

    def __post_init__(self):
        if self.kind not in CORE_CONSTANTS + SUGAR_CONSTANTS:
            raise ValueError(f"unknown constant {self.kind}")


@dataclass(frozen=True)
class Lam:
    var: str
    body: "Term"
    ann: Optional[Type] = None  # binder type, when the source gives one


@dataclass(frozen=True)
class App:
    fn: "Term"
    arg: "Term"


@dataclass(frozen=True)
class Unit:
    pass


@dataclass(frozen=True)
class Seq:
    first: "Term"
    second: "Term"


@dataclass(frozen=True)
class Pair:
    fst: "Term"
    snd: "Term"


@dataclass(frozen=True)
class LetPair:
    x: str
    y: str
    pair: "Term"
    body: "Term"


@dataclass(frozen=True)
class Inl:
    value: "Term"
    # the full sum type, when known; values in transit are stamped with it
    # so intermediate configurations stay checkable
    ann: Optional[Type] = None


@dataclass(frozen=True)
class Inr:
    value: "Term"
    ann: Optional[Type] = None


@dataclass(frozen=True)
class Case:
    scrutinee: "Term"
    xl: str
    left: "Term"
    xr: str
    right: "Term"


@dataclass(frozen=True)
class Absurd:
    value: "Term"


# --- sugar-only nodes (accepted by the parser, removed by `elaborate`) ---


@dataclass(frozen=True)
class Let:
    var: str
    value: "Term"
    body: "Term"


@dataclass(frozen=True)
class LamUnit:
    body: "Term"


@dataclass(frozen=True)
class LamPair:
    x: str
    y: str
    body: "Term"


@dataclass(frozen=True)
class Offer:
    """offer L { inl x -> M ; inr y -> N }   or   offer L {} when empty."""

    scrutinee: "Term"
    branches: Optional[tuple]  # None for the empty offer, else (xl, M, xr, N)


Term = Union[
    Var, Const, Lam, App, Unit, Seq, Pair, LetPair, Inl, Inr, Case, Absurd,
    Let, LamUnit, LamPair, Offer,
]

CORE_NODES = (Var, Const, Lam, App, Unit, Seq, Pair, LetPair, Inl, Inr, Case, Absurd)


def is_core(m: Term) -> bool:
    """True when no sugar node (or sugar constant) remains in the term."""
    match m:
        case Const(kind, _):
            return kind in CORE_CONSTANTS
        case Var() | Unit():
            return True
        case Lam(_, b) | Inl(b) | Inr(b) | Absurd(b):
            return is_core(b)
        case App(f, a) | Seq(first=f, second=a) | Pair(fst=f, snd=a):
            return is_core(f) and is_core(a)
        case LetPair(_, _, p, b):
            return is_core(p) and is_core(b)
        case Case(s, _, l, _, r):
            return is_core(s) and is_core(l) and is_core(r)
        case _:
            return False


def elaborate(m: Term) -> Term:
    """Expand every sugar construct into the core calculus.

    let x = M in N            ~>  (\\x. N) M
    \\(). M                   ~>  \\z. z; M
    \\(x,y). M                ~>  \\z. let (x,y) = z in M
    fork[S]                   ~>  \\f. let (y,z) = new[S] () in
                                       spawn (\\(). f y); z
    select[S] inl             ~>  \\c. let (y,z) = new[dual S] () in
                                       close (send (inl y, c)); z
    offer L {inl x->M; inr y->N}
                              ~>  let (v,w) = recv L in wait w;
                                  case v {inl x -> M; inr y -> N}
    offer L {}                ~>  let (v,w) = recv L in wait w; absurd v

    Fresh binders come from the global supply, so elaboration output
    stays Barendregt-unique.
    """
    match m:
        case Var() | Unit():
            return m
        case Const(kind, ann):
            if kind == "fork":
                f, y, z = fresh("f"), fresh("y"), fresh("z")
                new = Const("new", ann)
                child = elaborate(LamUnit(App(Var(f), Var(y))))
                return Lam(f, LetPair(y, z, App(new, Unit()),
                                      Seq(App(Const("spawn"), child), Var(z))))
            if kind in ("select_inl", "select_inr"):
                c, y, z = fresh("c"), fresh("y"), fresh("z")
                new = Const("new", dual(ann) if ann is not None else None)
                inj = Inl(Var(y)) if kind == "select_inl" else Inr(Var(y))
                return Lam(c, LetPair(y, z, App(new, Unit()),
                                      Seq(App(Const("close"),
                                              App(Const("send"), Pair(inj, Var(c)))),
                                          Var(z))))
            return m
        case Lam(x, b):
            return Lam(x, elaborate(b), m.ann)
        case App(f, a):
            # the constant fixes its argument's domain; pass it onto an
            # unannotated lambda so the beta-redex stays inferable
            match f, a:
                case Const("fork", ann), Lam(x, b, None) if ann is not None:
                    a = Lam(x, b, Sess(ann))
                case Const("spawn", _), Lam(x, b, None):
                    a = Lam(x, b, UnitT())
            return App(elaborate(f), elaborate(a))
        case Seq(a, b):
            return Seq(elaborate(a), elaborate(b))
        case Pair(a, b):
            return Pair(elaborate(a), elaborate(b))
        case LetPair(x, y, p, b):
            return LetPair(x, y, elaborate(p), elaborate(b))
        case Inl(v):
            return Inl(elaborate(v), m.ann)
        case Inr(v):
            return Inr(elaborate(v), m.ann)
        case Case(s, xl, l, xr, r):
            return Case(elaborate(s), xl, elaborate(l), xr, elaborate(r))
        case Absurd(v):
            return Absurd(elaborate(v))
        case Let(x, v, b):
            return App(Lam(x, elaborate(b)), elaborate(v))
        case LamUnit(b):
            z = fresh("z")
            return Lam(z, Seq(Var(z), elaborate(b)), UnitT())
        case LamPair(x, y, b):
            z = fresh("z")
            return Lam(z, LetPair(x, y, Var(z), elaborate(b)))
        case Offer(scrutinee, branches):
            v, w = fresh("v"), fresh("w")
            inner = App(Const("recv"), elaborate(scrutinee))
            if branches is None:
                tail: Term = Absurd(Var(v))
            else:
                xl, left, xr, right = branches
                tail = Case(Var(v), xl, elaborate(left), xr, elaborate(right))
            return LetPair(v, w, inner, Seq(App(Const("wait"), Var(w)), tail))
    raise TypeError(f"not a term: {m!r}")


def free_names(m: Term) -> set:
    match m:
        case Var(x):
            return {x}
        case Const() | Unit():
            return set()
        case Lam(x, b):
            return free_names(b) - {x}
        case App(f, a) | Seq(first=f, second=a) | Pair(fst=f, snd=a):
            return free_names(f) | free_names(a)
        case LetPair(x, y, p, b):
            return free_names(p) | (free_names(b) - {x, y})
        case Inl(v) | Inr(v) | Absurd(v):
            return free_names(v)
        case Case(s, xl, l, xr, r):
            return free_names(s) | (free_names(l) - {xl}) | (free_names(r) - {xr})
        case Let(x, v, b):
            return free_names(v) | (free_names(b) - {x})
        case LamUnit(b):
            return free_names(b)
        case LamPair(x, y, b):
            return free_names(b) - {x, y}
        case Offer(s, branches):
            out = free_names(s)
            if branches is not None:
                xl, l, xr, r = branches
                out |= (free_names(l) - {xl}) | (free_names(r) - {xr})
            return out
    raise TypeError(f"not a term: {m!r}")


def substitute(m: Term, x: str, v: Term) -> Term:
    """M{v/x}.  Capture-safe because binders are globally unique; the
    assertion guards against constructions that break that invariant."""
    match m:
        case Var(y):
            return v if y == x else m
        case Const() | Unit():
            return m
        case Lam(y, b):
            assert y != x, f"substitution hit a shadowing binder {y}"
            return Lam(y, substitute(b, x, v), m.ann)
        case App(f, a):
            return App(substitute(f, x, v), substitute(a, x, v))
        case Seq(a, b):
            return Seq(substitute(a, x, v), substitute(b, x, v))
        case Pair(a, b):
            return Pair(substitute(a, x, v), substitute(b, x, v))
        case LetPair(y, z, p, b):
            assert x not in (y, z), f"substitution hit a shadowing binder {x}"
            return LetPair(y, z, substitute(p, x, v), substitute(b, x, v))
        case Inl(w):
            return Inl(substitute(w, x, v), m.ann)
        case Inr(w):
            return Inr(substitute(w, x, v), m.ann)
        case Case(s, xl, l, xr, r):
            assert x not in (xl, xr), f"substitution hit a shadowing binder {x}"
            return Case(substitute(s, x, v), xl, substitute(l, x, v),
                        xr, substitute(r, x, v))
        case Absurd(w):
            return Absurd(substitute(w, x, v))
    raise TypeError(f"substitute expects a core term, got {m!r}")


def rename(m: Term, x: str, y: str) -> Term:
    """M{y/x} on names (used when a link step merges two endpoints)."""
    return substitute(m, x, Var(y))


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------


class Flag(Enum):
    MAIN = "main"
    CHILD = "child"

    def __add__(self, other: "Flag") -> "Flag":
        if self is Flag.MAIN and other is Flag.MAIN:
            raise ValueError("two main threads cannot be composed")
        return Flag.MAIN if Flag.MAIN in (self, other) else Flag.CHILD


@dataclass(frozen=True)
class Thread:
    flag: Flag
    term: Term


@dataclass(frozen=True)
class Par:
    left: "Configuration"
    right: "Configuration"


@dataclass(frozen=True)
class Res:
    """Channel restriction binding the two endpoints x and y.

    `ann` is the session type of the x side (y is its dual).  The
    evaluator fills it in when a channel is created and advances it on
    every communication, so runtime configurations stay checkable.
    """

    x: str
    y: str
    body: "Configuration"
    ann: Optional[SessionType] = None


Configuration = Union[Thread, Par, Res]


def config_free_names(c: Configuration) -> set:
    match c:
        case Thread(_, m):
            return free_names(m)
        case Par(l, r):
            return config_free_names(l) | config_free_names(r)
        case Res(x, y, body, _):
            return config_free_names(body) - {x, y}
    raise TypeError(f"not a configuration: {c!r}")


def config_rename(c: Configuration, x: str, y: str) -> Configuration:
    """C{y/x}; safe for the same reason term substitution is."""
    match c:
        case Thread(f, m):
            return Thread(f, rename(m, x, y))
        case Par(l, r):
            return Par(config_rename(l, x, y), config_rename(r, x, y))
        case Res(a, b, body, ann):
            assert x not in (a, b), "renaming hit a restriction binder"
            return Res(a, b, config_rename(body, x, y), ann)
    raise TypeError(f"not a configuration: {c!r}")


def threads(c: Configuration):
    """All threads left-to-right, ignoring binders."""
    match c:
        case Thread():
            return [c]
        case Par(l, r):
            return threads(l) + threads(r)
        case Res(_, _, body, _):
            return threads(body)
    raise TypeError(f"not a configuration: {c!r}")
