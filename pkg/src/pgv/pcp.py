"""A priority-annotated process calculus of sessions.

Processes communicate over channels created by restriction; every
channel operation carries a priority in its type, and typing forces a
process to use its channels in ascending priority order.  That rules
out the cyclic waiting patterns that deadlock, while still permitting
cyclic process networks.

Types (`A`, `B`):
    Out(o, A, B)    send a channel of type A, continue as B
    In(o, A, B)     receive a channel of type A, continue as B
    CloseT(o)       close the channel
    WaitT(o)        wait for the peer to close
    Choice(o, bs)   make a choice among branches (empty = no options,
                    the impossible-to-fulfil type)
    Branch(o, bs)   offer a choice among branches (empty = the
                    offer-nothing type that absorbs a context)

Processes:
    x <-> y           forward between two endpoints
    (nu x y : A) P    new channel; x gets A, y its dual
    P | Q             parallel composition
    halt              done
    x[y]. P           send a fresh endpoint y' over x, keep y
    x(y). P           receive an endpoint, bind it to y
    x[]. P            close x     x(). P    wait on x
    x[inl]. P         select the left branch (x[inr]. P right)
    x case { P ; Q }  offer both branches
    x case {}         offer nothing (absorbs the context)
    x<y>. P           send an existing endpoint y over x; sugar for
                      x[z]. (z <-> y | P)

The surface syntax above is what `parse_process` accepts and
`process_str` prints.  Types are written `A *[o] B`, `A par[o] B`,
`A +[o] B`, `A &[o] B`, `1[o]`, `bot[o]`, `0[o]`, `top[o]`.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Optional, Union

from .syntax import Bound, TOP, fin, meet, fresh, Hole, Priority

# -- types -------------------------------------------------------------------------


@dataclass(frozen=True)
class Out:
    prio: Union[Priority, Hole]
    payload: "PcpType"
    cont: "PcpType"


@dataclass(frozen=True)
class In:
    prio: Union[Priority, Hole]
    payload: "PcpType"
    cont: "PcpType"


@dataclass(frozen=True)
class CloseT:
    prio: Union[Priority, Hole]


@dataclass(frozen=True)
class WaitT:
    prio: Union[Priority, Hole]


@dataclass(frozen=True)
class Choice:
    prio: Union[Priority, Hole]
    branches: tuple = ()  # () or a 2-tuple (left, right)


@dataclass(frozen=True)
class Branch:
    prio: Union[Priority, Hole]
    branches: tuple = ()


PcpType = Union[Out, In, CloseT, WaitT, Choice, Branch]


def pcp_dual(a: PcpType) -> PcpType:
    """Swap each connective for its counterpart, dualising the
    components as well; priorities stay put."""
    match a:
        case Out(o, p, c):
            return In(o, pcp_dual(p), pcp_dual(c))
        case In(o, p, c):
            return Out(o, pcp_dual(p), pcp_dual(c))
        case CloseT(o):
            return WaitT(o)
        case WaitT(o):
            return CloseT(o)
        case Choice(o, bs):
            return Branch(o, tuple(pcp_dual(b) for b in bs))
        case Branch(o, bs):
            return Choice(o, tuple(pcp_dual(b) for b in bs))
    raise TypeError(f"not a process type: {a!r}")


def pcp_pr(a: PcpType) -> Bound:
    """Head priority; the typing rules keep it the smallest in the type."""
    if isinstance(a.prio, Hole):
        raise ValueError(f"priority hole {a.prio} has no value")
    return fin(a.prio)


def pcp_minpr(types) -> Bound:
    """Meet of the head priorities of a collection of types."""
    return meet(*(pcp_pr(a) for a in types)) if types else TOP


def pcp_priorities(a: PcpType):
    """Every priority mentioned in the type, in preorder."""
    match a:
        case Out(o, p, c) | In(o, p, c):
            yield o
            yield from pcp_priorities(p)
            yield from pcp_priorities(c)
        case CloseT(o) | WaitT(o):
            yield o
        case Choice(o, bs) | Branch(o, bs):
            yield o
            for b in bs:
                yield from pcp_priorities(b)


def pcp_type_holes(a: PcpType):
    for o in pcp_priorities(a):
        if isinstance(o, Hole):
            yield o


def pcp_fill(a: PcpType, values: dict) -> PcpType:
    """Replace priority holes by the chosen values."""
    def pick(o):
        return values[o.name] if isinstance(o, Hole) else o
    match a:
        case Out(o, p, c):
            return Out(pick(o), pcp_fill(p, values), pcp_fill(c, values))
        case In(o, p, c):
            return In(pick(o), pcp_fill(p, values), pcp_fill(c, values))
        case CloseT(o):
            return CloseT(pick(o))
        case WaitT(o):
            return WaitT(pick(o))
        case Choice(o, bs):
            return Choice(pick(o), tuple(pcp_fill(b, values) for b in bs))
        case Branch(o, bs):
            return Branch(pick(o), tuple(pcp_fill(b, values) for b in bs))
    raise TypeError(f"not a process type: {a!r}")


# -- processes ---------------------------------------------------------------------


@dataclass(frozen=True)
class Link:
    left: str
    right: str


@dataclass(frozen=True)
class Res:
    x: str
    y: str
    body: "Process"
    ann: Optional[PcpType] = None  # type of x


@dataclass(frozen=True)
class Par:
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class Halt:
    pass


@dataclass(frozen=True)
class Send:
    chan: str
    binder: str
    body: "Process"


@dataclass(frozen=True)
class Recv:
    chan: str
    binder: str
    body: "Process"


@dataclass(frozen=True)
class Close:
    chan: str
    body: "Process"


@dataclass(frozen=True)
class Wait:
    chan: str
    body: "Process"


@dataclass(frozen=True)
class SelectL:
    chan: str
    body: "Process"


@dataclass(frozen=True)
class SelectR:
    chan: str
    body: "Process"


@dataclass(frozen=True)
class Offer:
    chan: str
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class OfferNone:
    chan: str


@dataclass(frozen=True)
class SendFree:
    """Unbound send `x<y>. P`: ships an endpoint that already exists."""
    chan: str
    arg: str
    body: "Process"


Process = Union[Link, Res, Par, Halt, Send, Recv, Close, Wait,
                SelectL, SelectR, Offer, OfferNone, SendFree]


def desugar(p: Process) -> Process:
    """Rewrite unbound sends into bound send plus a forwarder."""
    match p:
        case SendFree(chan, arg, body):
            z = fresh(arg)
            return Send(chan, z, Par(Link(z, arg), desugar(body)))
        case Link() | Halt() | OfferNone():
            return p
        case Res(x, y, body, ann):
            return Res(x, y, desugar(body), ann)
        case Par(l, r):
            return Par(desugar(l), desugar(r))
        case Send(c, b, body):
            return Send(c, b, desugar(body))
        case Recv(c, b, body):
            return Recv(c, b, desugar(body))
        case Close(c, body):
            return Close(c, desugar(body))
        case Wait(c, body):
            return Wait(c, desugar(body))
        case SelectL(c, body):
            return SelectL(c, desugar(body))
        case SelectR(c, body):
            return SelectR(c, desugar(body))
        case Offer(c, l, r):
            return Offer(c, desugar(l), desugar(r))
    raise TypeError(f"not a process: {p!r}")


def process_free_names(p: Process) -> set:
    match p:
        case Link(a, b):
            return {a, b}
        case Res(x, y, body, _):
            return process_free_names(body) - {x, y}
        case Par(l, r):
            return process_free_names(l) | process_free_names(r)
        case Halt():
            return set()
        case Send(c, b, body) | Recv(c, b, body):
            return {c} | (process_free_names(body) - {b})
        case Close(c, body) | Wait(c, body) | SelectL(c, body) | SelectR(c, body):
            return {c} | process_free_names(body)
        case Offer(c, l, r):
            return {c} | process_free_names(l) | process_free_names(r)
        case OfferNone(c):
            return {c}
        case SendFree(c, a, body):
            return {c, a} | process_free_names(body)
    raise TypeError(f"not a process: {p!r}")


def process_rename(p: Process, old: str, new: str) -> Process:
    """Capture-naive renaming; binders must not shadow `old`."""
    def r(n):
        return new if n == old else n
    match p:
        case Link(a, b):
            return Link(r(a), r(b))
        case Res(x, y, body, ann):
            assert old not in (x, y), "renaming through a restriction binder"
            return Res(x, y, process_rename(body, old, new), ann)
        case Par(l, r2):
            return Par(process_rename(l, old, new), process_rename(r2, old, new))
        case Halt():
            return p
        case Send(c, b, body):
            assert b != old, "renaming through a send binder"
            return Send(r(c), b, process_rename(body, old, new))
        case Recv(c, b, body):
            assert b != old, "renaming through a receive binder"
            return Recv(r(c), b, process_rename(body, old, new))
        case Close(c, body):
            return Close(r(c), process_rename(body, old, new))
        case Wait(c, body):
            return Wait(r(c), process_rename(body, old, new))
        case SelectL(c, body):
            return SelectL(r(c), process_rename(body, old, new))
        case SelectR(c, body):
            return SelectR(r(c), process_rename(body, old, new))
        case Offer(c, l, r2):
            return Offer(r(c), process_rename(l, old, new),
                         process_rename(r2, old, new))
        case OfferNone(c):
            return OfferNone(r(c))
        case SendFree(c, a, body):
            return SendFree(r(c), r(a), process_rename(body, old, new))
    raise TypeError(f"not a process: {p!r}")


# -- printing -----------------------------------------------------------------------

def pcp_type_str(a: PcpType) -> str:
    def atom(t):
        match t:
            case CloseT(o):
                return f"1[{o}]"
            case WaitT(o):
                return f"bot[{o}]"
            case Choice(o, ()):
                return f"0[{o}]"
            case Branch(o, ()):
                return f"top[{o}]"
            case _:
                return f"({pcp_type_str(t)})"

    match a:
        case Out(o, p, c):
            return f"{atom(p)} *[{o}] {atom(c)}"
        case In(o, p, c):
            return f"{atom(p)} par[{o}] {atom(c)}"
        case Choice(o, (l, r)):
            return f"{atom(l)} +[{o}] {atom(r)}"
        case Branch(o, (l, r)):
            return f"{atom(l)} &[{o}] {atom(r)}"
        case _:
            return atom(a)


def process_str(p: Process) -> str:
    match p:
        case Link(a, b):
            return f"{a} <-> {b}"
        case Res(x, y, body, ann):
            head = f"(nu {x} {y} : {pcp_type_str(ann)})" if ann is not None \
                else f"(nu {x} {y})"
            return f"{head} {process_str(body)}"
        case Par(l, r):
            ls = process_str(l)
            if isinstance(l, (Par, Res)):
                ls = f"({ls})"
            return f"{ls} | {process_str(r)}"
        case Halt():
            return "halt"
        case Send(c, b, body):
            return f"{c}[{b}]. {_tail_str(body)}"
        case Recv(c, b, body):
            return f"{c}({b}). {_tail_str(body)}"
        case Close(c, body):
            return f"{c}[]. {_tail_str(body)}"
        case Wait(c, body):
            return f"{c}(). {_tail_str(body)}"
        case SelectL(c, body):
            return f"{c}[inl]. {_tail_str(body)}"
        case SelectR(c, body):
            return f"{c}[inr]. {_tail_str(body)}"
        case Offer(c, l, r):
            return f"{c} case {{ {process_str(l)} ; {process_str(r)} }}"
        case OfferNone(c):
            return f"{c} case {{}}"
        case SendFree(c, a, body):
            return f"{c}<{a}>. {_tail_str(body)}"
    raise TypeError(f"not a process: {p!r}")


def _tail_str(p: Process) -> str:
    # a parallel continuation needs parentheses to stay under the prefix
    s = process_str(p)
    return f"({s})" if isinstance(p, Par) else s


# -- parsing ------------------------------------------------------------------------

class PcpParseError(Exception):
    pass


_TOKENS = re.compile(r"""
      (?P<ws>\s+|--[^\n]*)
    | (?P<int>\d+)
    | (?P<ident>[A-Za-z_][A-Za-z0-9_'~]*)
    | (?P<hole>\?[A-Za-z_][A-Za-z0-9_']*)
    | (?P<sym><->|<|>|\*|\+|&|\(|\)|\[|\]|\{|\}|\.|:|\||;)
""", re.VERBOSE)


def _lex(src: str):
    toks, pos = [], 0
    while pos < len(src):
        m = _TOKENS.match(src, pos)
        if m is None:
            line = src.count("\n", 0, pos) + 1
            raise PcpParseError(f"line {line}: stray character {src[pos]!r}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        line = src.count("\n", 0, m.start()) + 1
        toks.append((m.lastgroup, m.group(), line))
    toks.append(("eof", "", src.count("\n") + 1))
    return toks


class _PcpParser:
    def __init__(self, src: str):
        self.toks = _lex(src)
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        kind, tok, line = self.next()
        if tok != text:
            raise PcpParseError(f"line {line}: expected {text!r}, got {tok!r}")
        return tok

    def fail(self, msg):
        _, tok, line = self.peek()
        raise PcpParseError(f"line {line}: {msg} (at {tok!r})")

    # types

    def priority(self):
        self.expect("[")
        kind, tok, line = self.next()
        if kind == "int":
            out = int(tok)
        elif kind == "hole":
            out = Hole(tok[1:])
        else:
            raise PcpParseError(f"line {line}: expected a priority, got {tok!r}")
        self.expect("]")
        return out

    def type_atom(self):
        kind, tok, _ = self.peek()
        if tok == "(":
            self.next()
            t = self.type()
            self.expect(")")
            return t
        if kind == "int" and tok == "1":
            self.next()
            return CloseT(self.priority())
        if kind == "int" and tok == "0":
            self.next()
            return Choice(self.priority(), ())
        if tok == "bot":
            self.next()
            return WaitT(self.priority())
        if tok == "top":
            self.next()
            return Branch(self.priority(), ())
        self.fail("expected a type")

    def type(self):
        left = self.type_atom()
        _, tok, _ = self.peek()
        if tok in ("*", "+", "&", "par"):
            self.next()
            o = self.priority()
            right = self.type_atom()
            match tok:
                case "*":
                    return Out(o, left, right)
                case "par":
                    return In(o, left, right)
                case "+":
                    return Choice(o, (left, right))
                case "&":
                    return Branch(o, (left, right))
        return left

    # processes

    def process(self):
        left = self.process_one()
        if self.peek()[1] == "|":
            self.next()
            return Par(left, self.process())
        return left

    def process_one(self):
        kind, tok, _ = self.peek()
        if tok == "(":
            if self.peek(1)[1] == "nu":
                self.next()
                self.next()
                x = self.name()
                y = self.name()
                ann = None
                if self.peek()[1] == ":":
                    self.next()
                    ann = self.type()
                self.expect(")")
                return Res(x, y, self.process(), ann)
            self.next()
            p = self.process()
            self.expect(")")
            return p
        if tok == "halt":
            self.next()
            return Halt()
        if kind == "ident":
            return self.prefixed()
        self.fail("expected a process")

    def name(self):
        kind, tok, line = self.next()
        if kind != "ident" or tok in ("halt", "nu", "case", "inl", "inr",
                                      "par", "bot", "top"):
            raise PcpParseError(f"line {line}: expected a name, got {tok!r}")
        return tok

    def prefixed(self):
        chan = self.name()
        _, tok, _ = self.peek()
        if tok == "<->":
            self.next()
            return Link(chan, self.name())
        if tok == "<":
            self.next()
            arg = self.name()
            self.expect(">")
            self.expect(".")
            return SendFree(chan, arg, self.process_one())
        if tok == "[":
            self.next()
            _, tok2, _ = self.peek()
            if tok2 == "]":
                self.next()
                self.expect(".")
                return Close(chan, self.process_one())
            if tok2 in ("inl", "inr"):
                self.next()
                self.expect("]")
                self.expect(".")
                body = self.process_one()
                return SelectL(chan, body) if tok2 == "inl" \
                    else SelectR(chan, body)
            binder = self.name()
            self.expect("]")
            self.expect(".")
            return Send(chan, binder, self.process_one())
        if tok == "(":
            self.next()
            if self.peek()[1] == ")":
                self.next()
                self.expect(".")
                return Wait(chan, self.process_one())
            binder = self.name()
            self.expect(")")
            self.expect(".")
            return Recv(chan, binder, self.process_one())
        if tok == "case":
            self.next()
            self.expect("{")
            if self.peek()[1] == "}":
                self.next()
                return OfferNone(chan)
            left = self.process()
            self.expect(";")
            right = self.process()
            self.expect("}")
            return Offer(chan, left, right)
        self.fail(f"expected an action on {chan!r}")


def parse_process(src: str) -> Process:
    p = _PcpParser(src)
    out = p.process()
    kind, tok, line = p.peek()
    if kind != "eof":
        raise PcpParseError(f"line {line}: trailing input at {tok!r}")
    return _uniquify(out, {})


def parse_pcp_type(src: str) -> PcpType:
    p = _PcpParser(src)
    out = p.type()
    kind, tok, line = p.peek()
    if kind != "eof":
        raise PcpParseError(f"line {line}: trailing input at {tok!r}")
    return out


def _uniquify(p: Process, scope: dict, used: Optional[set] = None) -> Process:
    """Rename binders apart so every binder in the tree is unique, even
    across sibling branches."""
    if used is None:
        used = set()

    def look(n):
        got = scope.get(n, n)
        used.add(got)
        return got

    def bind(n):
        nn = fresh(n) if n in used else n
        used.add(nn)
        return nn

    match p:
        case Link(a, b):
            return Link(look(a), look(b))
        case Res(x, y, body, ann):
            nx, ny = bind(x), bind(y)
            inner = dict(scope)
            inner[x] = nx
            inner[y] = ny
            return Res(nx, ny, _uniquify(body, inner, used), ann)
        case Par(l, r):
            return Par(_uniquify(l, scope, used), _uniquify(r, scope, used))
        case Halt():
            return p
        case Send(c, b, body) | Recv(c, b, body):
            nc = look(c)
            nb = bind(b)
            inner = dict(scope)
            inner[b] = nb
            cls = type(p)
            return cls(nc, nb, _uniquify(body, inner, used))
        case Close(c, body) | Wait(c, body) | SelectL(c, body) | SelectR(c, body):
            cls = type(p)
            return cls(look(c), _uniquify(body, scope, used))
        case Offer(c, l, r):
            return Offer(look(c), _uniquify(l, scope, used),
                         _uniquify(r, scope, used))
        case OfferNone(c):
            return OfferNone(look(c))
        case SendFree(c, a, body):
            return SendFree(look(c), look(a), _uniquify(body, scope, used))
    raise TypeError(f"not a process: {p!r}")


# -- typechecking --------------------------------------------------------------------

from .typecheck import (  # noqa: E402  (kind strings shared across checkers)
    DUALITY, LINEARITY, MISMATCH, NO_ANNOTATION, PRIORITY, UNBOUND,
)


class PcpTypeError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(f"[{kind}] {message}")
        self.kind = kind
        self.message = message


class _PcpChecker:
    """Residual-threading linear checker: names move from `env` to
    `consumed` as actions use them."""

    def __init__(self, env: dict):
        self.env = dict(env)
        self.consumed = {}

    def use(self, x: str) -> PcpType:
        if x in self.consumed:
            raise PcpTypeError(LINEARITY, f"{x} is used more than once")
        if x not in self.env:
            raise PcpTypeError(UNBOUND, f"{x} is not in scope")
        t = self.env.pop(x)
        self.consumed[x] = t
        return t

    def bind(self, x: str, t: PcpType):
        self.env[x] = t
        self.consumed.pop(x, None)  # a fresh binding shadows an old use

    def snapshot(self):
        return set(self.env)

    def spent_since(self, snap) -> dict:
        return {n: self.consumed[n] for n in snap - set(self.env)}

    def checkpoint(self):
        return dict(self.env), dict(self.consumed)

    def restore(self, state):
        self.env, self.consumed = dict(state[0]), dict(state[1])

    def require_spent(self, *names):
        for n in names:
            if n in self.env:
                raise PcpTypeError(LINEARITY, f"{n} is never used")

    def others_below(self, o, spent: dict, extra, rule: str):
        """The action's priority must be lower than the head priority of
        everything else its continuation touches."""
        floor = meet(pcp_minpr(list(spent.values())), pcp_minpr(list(extra)))
        if not (fin(o) < floor):
            raise PcpTypeError(
                PRIORITY,
                f"{rule}: priority {o} must come before the rest of the "
                f"context (smallest is {floor})")

    def check(self, p: Process):
        match p:
            case Link(a, b):
                ta = self.use(a)
                tb = self.use(b)
                if tb != pcp_dual(ta):
                    raise PcpTypeError(
                        DUALITY,
                        f"linked endpoints {a} : {pcp_type_str(ta)} and "
                        f"{b} : {pcp_type_str(tb)} are not dual")
            case Res(x, y, body, ann):
                if ann is None:
                    raise PcpTypeError(
                        NO_ANNOTATION,
                        f"restriction (nu {x} {y}) needs a type to check")
                self.bind(x, ann)
                self.bind(y, pcp_dual(ann))
                self.check(body)
                self.require_spent(x, y)
            case Par(l, r):
                self.check(l)
                self.check(r)
            case Halt():
                pass
            case Send(c, binder, body):
                t = self.use(c)
                if not isinstance(t, Out):
                    raise PcpTypeError(
                        MISMATCH, f"{c} : {pcp_type_str(t)} cannot send")
                self.bind(binder, t.payload)
                self.bind(c, t.cont)
                snap = self.snapshot()
                self.check(body)
                self.require_spent(binder, c)
                spent = self.spent_since(snap)
                spent.pop(binder, None)
                spent.pop(c, None)
                self.others_below(t.prio, spent, (t.payload, t.cont), "send")
            case Recv(c, binder, body):
                t = self.use(c)
                if not isinstance(t, In):
                    raise PcpTypeError(
                        MISMATCH, f"{c} : {pcp_type_str(t)} cannot receive")
                self.bind(binder, t.payload)
                self.bind(c, t.cont)
                snap = self.snapshot()
                self.check(body)
                self.require_spent(binder, c)
                spent = self.spent_since(snap)
                spent.pop(binder, None)
                spent.pop(c, None)
                self.others_below(t.prio, spent, (t.payload, t.cont), "receive")
            case Close(c, body):
                t = self.use(c)
                if not isinstance(t, CloseT):
                    raise PcpTypeError(
                        MISMATCH, f"{c} : {pcp_type_str(t)} cannot close")
                snap = self.snapshot()
                self.check(body)
                spent = self.spent_since(snap)
                self.others_below(t.prio, spent, (), "close")
            case Wait(c, body):
                t = self.use(c)
                if not isinstance(t, WaitT):
                    raise PcpTypeError(
                        MISMATCH, f"{c} : {pcp_type_str(t)} cannot wait")
                snap = self.snapshot()
                self.check(body)
                spent = self.spent_since(snap)
                self.others_below(t.prio, spent, (), "wait")
            case SelectL(c, body) | SelectR(c, body):
                t = self.use(c)
                if not (isinstance(t, Choice) and len(t.branches) == 2):
                    raise PcpTypeError(
                        MISMATCH,
                        f"{c} : {pcp_type_str(t)} offers no choice to make")
                left, right = t.branches
                if pcp_pr(left) != pcp_pr(right):
                    raise PcpTypeError(
                        PRIORITY,
                        f"choice branches of {c} must start at one priority "
                        f"({pcp_type_str(left)} vs {pcp_type_str(right)})")
                self.bind(c, left if isinstance(p, SelectL) else right)
                snap = self.snapshot()
                self.check(body)
                self.require_spent(c)
                spent = self.spent_since(snap)
                spent.pop(c, None)
                self.others_below(t.prio, spent, (left, right), "select")
            case Offer(c, pl, pr_):
                t = self.use(c)
                if not (isinstance(t, Branch) and len(t.branches) == 2):
                    raise PcpTypeError(
                        MISMATCH,
                        f"{c} : {pcp_type_str(t)} offers no branches")
                left, right = t.branches
                saved = self.checkpoint()
                self.bind(c, left)
                snap = self.snapshot()
                self.check(pl)
                self.require_spent(c)
                spent_l = self.spent_since(snap)
                after_left = self.checkpoint()
                self.restore(saved)
                self.bind(c, right)
                snap = self.snapshot()
                self.check(pr_)
                self.require_spent(c)
                spent_r = self.spent_since(snap)
                if set(spent_l) - {c} != set(spent_r) - {c}:
                    only = (set(spent_l) ^ set(spent_r)) - {c}
                    raise PcpTypeError(
                        LINEARITY,
                        f"offer branches on {c} use different channels "
                        f"({', '.join(sorted(only))})")
                self.restore(after_left)
                spent_l.pop(c, None)
                self.others_below(t.prio, spent_l, (left, right), "offer")
            case OfferNone(c):
                t = self.use(c)
                if not (isinstance(t, Branch) and len(t.branches) == 0):
                    raise PcpTypeError(
                        MISMATCH,
                        f"{c} : {pcp_type_str(t)} is not the empty offer")
                # absorbs whatever the context still holds
                absorbed = list(self.env.values())
                for n in list(self.env):
                    self.consumed[n] = self.env.pop(n)
                self.others_below(t.prio, {}, absorbed, "empty offer")
            case SendFree():
                self.check(desugar(p))
            case _:
                raise TypeError(f"not a process: {p!r}")


def pcp_typecheck(p: Process, env: Optional[dict] = None) -> None:
    """Raise PcpTypeError unless the process is well typed; an empty
    environment means the process must be closed."""
    checker = _PcpChecker(env or {})
    checker.check(desugar(p))
    if checker.env:
        leftover = ", ".join(sorted(checker.env))
        raise PcpTypeError(LINEARITY, f"unused channels: {leftover}")


# -- operational semantics -------------------------------------------------------------

PCP_RULES = ("E-Link", "E-Send", "E-Close", "E-Select-Inl", "E-Select-Inr")


class PcpStuck(Exception):
    def __init__(self, soup, reason: str):
        super().__init__(f"process is stuck: {reason}\n"
                         f"  {process_str(soup_to_process(soup))}")
        self.soup = soup
        self.reason = reason


@dataclass
class PcpRestriction:
    x: str
    y: str
    ann: Optional[PcpType] = None  # type of x


@dataclass
class PcpSoup:
    restrictions: list
    processes: list  # action processes (links and prefixes), Halt dropped

    def clone(self):
        return PcpSoup(list(self.restrictions), list(self.processes))

    def restriction_on(self, name):
        for i, r in enumerate(self.restrictions):
            if name in (r.x, r.y):
                return i
        return None


def process_to_soup(p: Process) -> PcpSoup:
    restrictions, processes = [], []

    def walk(q):
        match q:
            case Res(x, y, body, ann):
                restrictions.append(PcpRestriction(x, y, ann))
                walk(body)
            case Par(l, r):
                walk(l)
                walk(r)
            case Halt():
                pass
            case _:
                processes.append(q)

    walk(desugar(p))
    return PcpSoup(restrictions, processes)


def soup_to_process(soup: PcpSoup) -> Process:
    body = None
    for q in soup.processes:
        body = q if body is None else Par(body, q)
    if body is None:
        body = Halt()
    for r in reversed(soup.restrictions):
        body = Res(r.x, r.y, body, r.ann)
    return body


def _collapse_links(soup: PcpSoup) -> None:
    """(nu x y)(x <-> y) vanishes."""
    changed = True
    while changed:
        changed = False
        for i, q in enumerate(soup.processes):
            match q:
                case Link(a, b):
                    ri = soup.restriction_on(a)
                    if ri is not None:
                        r = soup.restrictions[ri]
                        if {a, b} == {r.x, r.y}:
                            del soup.restrictions[ri]
                            del soup.processes[i]
                            changed = True
                            break


def head_action(q: Process):
    """(kind, channel) of the action a sequential process starts with."""
    match q:
        case Link(a, b):
            return ("link", a, b)
        case Send(c, _, _):
            return ("send", c)
        case Recv(c, _, _):
            return ("recv", c)
        case Close(c, _):
            return ("close", c)
        case Wait(c, _):
            return ("wait", c)
        case SelectL(c, _):
            return ("select-inl", c)
        case SelectR(c, _):
            return ("select-inr", c)
        case Offer(c, _, _):
            return ("offer", c)
        case OfferNone(c):
            return ("offer-none", c)
    return None


@dataclass
class PcpStep:
    label: str
    names: tuple
    apply: object


def _insert(soup: PcpSoup, i: int, q: Process) -> None:
    """Splice a continuation back in, flattening nested structure."""
    sub = process_to_soup(q)
    soup.restrictions.extend(sub.restrictions)
    soup.processes[i:i + 1] = sub.processes or []


def pcp_enabled_steps(soup: PcpSoup) -> list:
    steps = []
    heads = {i: head_action(q) for i, q in enumerate(soup.processes)}
    for i, q in enumerate(soup.processes):
        match q:
            case Link(a, b):
                seen = set()
                for w, x in ((a, b), (b, a)):
                    ri = soup.restriction_on(x)
                    if ri is None or ri in seen:
                        continue
                    seen.add(ri)
                    r = soup.restrictions[ri]
                    gone = r.y if x == r.x else r.x

                    def apply_link(i=i, ri=ri, w=w, gone=gone):
                        out = soup.clone()
                        del out.restrictions[ri]
                        del out.processes[i]
                        if w != gone:
                            out.processes = [
                                process_rename(p2, gone, w)
                                for p2 in out.processes]
                        return out
                    steps.append(PcpStep("E-Link", (w, x), apply_link))
            case Send(c, z, body):
                ri = soup.restriction_on(c)
                if ri is None:
                    continue
                r = soup.restrictions[ri]
                peer = r.y if c == r.x else r.x
                for j, h in heads.items():
                    if j != i and h is not None and h[0] == "recv" \
                            and h[1] == peer:
                        def apply_send(i=i, j=j, ri=ri, c=c):
                            out = soup.clone()
                            snd = out.processes[i]
                            rcv = out.processes[j]
                            r0 = out.restrictions[ri]
                            if r0.ann is not None:
                                # annotation stays oriented to r0.x; the
                                # fresh pair is oriented to the sender's
                                # kept endpoint
                                pay = r0.ann.payload if c == r0.x \
                                    else pcp_dual(r0.ann.payload)
                                cont = r0.ann.cont
                            else:
                                pay = cont = None
                            out.restrictions[ri] = PcpRestriction(
                                r0.x, r0.y, cont)
                            out.restrictions.append(
                                PcpRestriction(snd.binder, rcv.binder, pay))
                            for k, repl in sorted(
                                    ((i, snd.body), (j, rcv.body)),
                                    reverse=True):
                                _insert(out, k, repl)
                            return out
                        steps.append(PcpStep("E-Send", (c, peer), apply_send))
            case Close(c, body):
                ri = soup.restriction_on(c)
                if ri is None:
                    continue
                r = soup.restrictions[ri]
                peer = r.y if c == r.x else r.x
                for j, h in heads.items():
                    if j != i and h is not None and h[0] == "wait" \
                            and h[1] == peer:
                        def apply_close(i=i, j=j, ri=ri):
                            out = soup.clone()
                            cl = out.processes[i]
                            wt = out.processes[j]
                            del out.restrictions[ri]
                            for k, repl in sorted(
                                    ((i, cl.body), (j, wt.body)),
                                    reverse=True):
                                _insert(out, k, repl)
                            return out
                        steps.append(PcpStep("E-Close", (c, peer), apply_close))
            case SelectL(c, body) | SelectR(c, body):
                ri = soup.restriction_on(c)
                if ri is None:
                    continue
                r = soup.restrictions[ri]
                peer = r.y if c == r.x else r.x
                label = "E-Select-Inl" if isinstance(q, SelectL) \
                    else "E-Select-Inr"
                for j, h in heads.items():
                    if j != i and h is not None and h[0] == "offer" \
                            and h[1] == peer:
                        def apply_select(i=i, j=j, ri=ri,
                                         left=isinstance(q, SelectL)):
                            out = soup.clone()
                            sel = out.processes[i]
                            off = out.processes[j]
                            r0 = out.restrictions[ri]
                            if r0.ann is not None and len(r0.ann.branches) == 2:
                                out.restrictions[ri] = PcpRestriction(
                                    r0.x, r0.y,
                                    r0.ann.branches[0 if left else 1])
                            taken = off.left if left else off.right
                            for k, repl in sorted(
                                    ((i, sel.body), (j, taken)),
                                    reverse=True):
                                _insert(out, k, repl)
                            return out
                        steps.append(PcpStep(label, (c, peer), apply_select))
    return steps


@dataclass
class PcpRunResult:
    outcome: str          # "halt" | "fuel-exhausted"
    process: Process
    steps: int
    trace: list           # (label, names) pairs

    @property
    def rules_used(self):
        return [label for label, _ in self.trace]


def pcp_run(p: Process, fuel: int = 10_000, rng=None) -> PcpRunResult:
    """Reduce to termination.  `rng` (a random.Random) picks among
    enabled steps; by default the first enabled step fires."""
    soup = process_to_soup(p)
    trace = []
    for n in range(fuel):
        _collapse_links(soup)
        if not soup.processes:
            return PcpRunResult("halt", Halt(), n, trace)
        steps = pcp_enabled_steps(soup)
        if not steps:
            blocked = ", ".join(
                f"{h[0]} on {h[1]}" for h in
                (head_action(q) for q in soup.processes) if h)
            raise PcpStuck(soup, f"no synchronisation possible ({blocked})")
        chosen = rng.choice(steps) if rng is not None else steps[0]
        soup = chosen.apply()
        trace.append((chosen.label, chosen.names))
    return PcpRunResult("fuel-exhausted", soup_to_process(soup), fuel, trace)


# -- congruence ----------------------------------------------------------------------

def _pcp_serialize(q: Process, number) -> str:
    match q:
        case Link(a, b):
            return min(f"(link {number(a)} {number(b)})",
                       f"(link {number(b)} {number(a)})")
        case Send(c, z, body):
            return f"(send {number(c)} {number(z)} {_pcp_serialize(body, number)})"
        case Recv(c, z, body):
            return f"(recv {number(c)} {number(z)} {_pcp_serialize(body, number)})"
        case Close(c, body):
            return f"(close {number(c)} {_pcp_serialize(body, number)})"
        case Wait(c, body):
            return f"(wait {number(c)} {_pcp_serialize(body, number)})"
        case SelectL(c, body):
            return f"(inl {number(c)} {_pcp_serialize(body, number)})"
        case SelectR(c, body):
            return f"(inr {number(c)} {_pcp_serialize(body, number)})"
        case Offer(c, l, r):
            return (f"(offer {number(c)} {_pcp_serialize(l, number)} "
                    f"{_pcp_serialize(r, number)})")
        case OfferNone(c):
            return f"(offer0 {number(c)})"
        case Halt():
            return "(halt)"
        case Par(l, r):
            return f"(par {_pcp_serialize(l, number)} {_pcp_serialize(r, number)})"
        case Res(x, y, body, _):
            a, b = number(x), number(y)
            return f"(res {min(a, b)} {max(a, b)} {_pcp_serialize(body, number)})"
        case SendFree(c, a, body):
            return f"(usend {number(c)} {number(a)} {_pcp_serialize(body, number)})"
    raise TypeError(f"not a process: {q!r}")


_PERM_LIMIT = 7


def pcp_canonical_key(p: Process) -> str:
    soup = process_to_soup(p)
    _collapse_links(soup)
    literal = process_free_names(soup_to_process(soup))

    def local_key(q):
        names = {}

        def number(n):
            if n in literal:
                return f"'{n}"
            if n not in names:
                names[n] = f"#{len(names):04d}"
            return names[n]
        return _pcp_serialize(q, number)

    keyed = sorted(((local_key(q), i, q) for i, q in enumerate(soup.processes)),
                   key=lambda kq: kq[:2])
    groups = [list(g) for _, g in itertools.groupby(keyed, key=lambda kq: kq[0])]
    for g in groups:
        if len(g) > _PERM_LIMIT:
            raise ValueError("too many structurally identical processes")

    def serial(order):
        names = {}

        def number(n):
            if n in literal:
                return f"'{n}"
            if n not in names:
                names[n] = f"#{len(names):04d}"
            return names[n]
        parts = [_pcp_serialize(q, number) for q in order]
        pairs = []
        for r in soup.restrictions:
            a = names.get(r.x, "?unused")
            b = names.get(r.y, "?unused")
            pairs.append(f"(res {min(a, b)} {max(a, b)})")
        return " | ".join(parts) + " || " + " ".join(sorted(pairs))

    best = None
    for perm in itertools.product(*(itertools.permutations(g) for g in groups)):
        order = [kq[2] for group in perm for kq in group]
        s = serial(order)
        if best is None or s < best:
            best = s
    return best


def pcp_congruent(p: Process, q: Process) -> bool:
    return pcp_canonical_key(p) == pcp_canonical_key(q)
