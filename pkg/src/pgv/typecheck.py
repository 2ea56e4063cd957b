"""Priority-aware type checking for terms and configurations.

Sequents carry an upper bound on the priorities of the communication
actions a term may perform: `env |-p M : T`.  The lower bound is
approximated by the smallest priority in the environment, and sequencing
rules require the finished side's upper bound to lie strictly below the
pending side's lower bound.  That ordering discipline is what rules out
cyclic waiting.

The checker is bidirectional:

  * `infer` synthesises a type bottom-up;
  * `check` pushes an expected type into introduction forms.

Synthesis alone cannot type `inl`/`inr` (the other summand is not
determined) or an unannotated lambda, but in practice those sit in
positions with a known expected type: payload of a `send` whose channel
fixes the payload type, argument of a beta-redex, or under a binder
annotation (`\\x : T. M`).

Linearity is handled by threading a mutable environment: using a
variable removes it, and every checked scope must end with its binders
consumed.  `absurd M` absorbs whatever is left in the environment at
that point (it discharges any context), so it is best kept in tail
position; if it swallows a variable a sibling needed, the error shows
up at the sibling as an "already consumed" failure.

Constants are typed by schema instantiation driven by the argument:
`send`, `recv`, `close`, and `wait` read the session type off the
channel argument, `new` requires its annotation, and `spawn` accepts
any unit-to-unit function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import syntax as S
from .syntax import (
    Absurd, App, Case, Const, EndR, EndS, Flag, Fn, Inl, Inr, Lam, LetPair,
    Pair, Par, Prod, Recv, Res, Send, Seq, Sess, Sum, Thread, Unit, UnitT,
    Var, VoidT, Bound, BOT, TOP, fin, join, meet, dual, minpr, pr,
)
from .pretty import term_str, type_str


# error kinds
UNBOUND = "unbound-name"
LINEARITY = "linearity"
MISMATCH = "type-mismatch"
PRIORITY = "priority-violation"
DUALITY = "duality-mismatch"
SCHEMA = "schema-instantiation"
MAIN_CLASH = "two-main-threads"
NO_ANNOTATION = "missing-annotation"
ILL_FORMED = "ill-formed-type"


class TypeCheckError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(f"[{kind}] {message}")
        self.kind = kind
        self.message = message


@dataclass
class Derivation:
    """One node of the typing derivation, for diagnostics."""
    rule: str
    subject: str
    type: Optional[str]
    bound: Optional[Bound]
    children: list = field(default_factory=list)

    def render(self, indent: int = 0) -> str:
        pad = "  " * indent
        head = f"{pad}{self.rule}: {self.subject}"
        if self.type is not None:
            head += f" : {self.type}"
        if self.bound is not None:
            head += f"  [bound {self.bound}]"
        lines = [head]
        for ch in self.children:
            lines.append(ch.render(indent + 1))
        return "\n".join(lines)


@dataclass
class TermResult:
    type: object
    bound: Bound
    derivation: Derivation


@dataclass
class ConfigResult:
    flag: Flag
    derivation: Derivation


def _snip(m, limit: int = 48) -> str:
    try:
        s = term_str(m)
    except Exception:
        s = repr(m)
    return s if len(s) <= limit else s[: limit - 3] + "..."


def instantiate_constant(kind: str, ann, arg_type):
    """Concrete arrow type for a core constant applied to `arg_type`.

    Returns the full function type; raises when the argument shape does
    not determine an instance.
    """
    match kind:
        case "link":
            match arg_type:
                case Prod(Sess(s1), Sess(s2)):
                    if s2 != dual(s1):
                        raise TypeCheckError(
                            DUALITY,
                            f"link expects dual endpoints, got {type_str(arg_type)}")
                    return Fn(TOP, BOT, arg_type, UnitT())
            raise TypeCheckError(
                SCHEMA, f"link expects a pair of endpoints, got {type_str(arg_type)}")
        case "new":
            if ann is None:
                raise TypeCheckError(
                    NO_ANNOTATION, "new needs a session annotation, as in new[S]")
            if arg_type != UnitT():
                raise TypeCheckError(
                    MISMATCH, f"new expects a unit argument, got {type_str(arg_type)}")
            return Fn(TOP, BOT, UnitT(), Prod(Sess(ann), Sess(dual(ann))))
        case "spawn":
            match arg_type:
                case Fn(_, _, UnitT(), UnitT()):
                    return Fn(TOP, BOT, arg_type, UnitT())
            raise TypeCheckError(
                SCHEMA,
                f"spawn expects a unit-to-unit function, got {type_str(arg_type)}")
        case "send":
            match arg_type:
                case Prod(payload, Sess(Send(o, expected, cont))):
                    if payload != expected:
                        raise TypeCheckError(
                            MISMATCH,
                            f"channel carries {type_str(expected)}, "
                            f"payload is {type_str(payload)}")
                    return Fn(TOP, fin(o), arg_type, Sess(cont))
            raise TypeCheckError(
                SCHEMA,
                f"send expects a (payload, sending endpoint) pair, "
                f"got {type_str(arg_type)}")
        case "recv":
            match arg_type:
                case Sess(Recv(o, payload, cont)):
                    return Fn(TOP, fin(o), arg_type, Prod(payload, Sess(cont)))
            raise TypeCheckError(
                SCHEMA, f"recv expects a receiving endpoint, got {type_str(arg_type)}")
        case "close":
            match arg_type:
                case Sess(EndS(o)):
                    return Fn(TOP, fin(o), arg_type, UnitT())
            raise TypeCheckError(
                SCHEMA, f"close expects an end! endpoint, got {type_str(arg_type)}")
        case "wait":
            match arg_type:
                case Sess(EndR(o)):
                    return Fn(TOP, fin(o), arg_type, UnitT())
            raise TypeCheckError(
                SCHEMA, f"wait expects an end? endpoint, got {type_str(arg_type)}")
    raise TypeCheckError(SCHEMA, f"unknown constant {kind}")


class Checker:
    def __init__(self, env):
        for name, t in env.items():
            self._require_well_formed(t, name)
        self.env = dict(env)
        self.consumed: dict[str, object] = {}
        self.nodes: list[Derivation] = []

    # -- environment plumbing --------------------------------------------

    def _require_well_formed(self, t, where: str):
        if not S.well_formed_type(t):
            raise TypeCheckError(
                ILL_FORMED,
                f"{where} : {type_str(t)} has a head priority that is not "
                f"minimal in the type")

    def bind(self, name: str, t):
        if name in self.env or name in self.consumed:
            raise TypeCheckError(
                LINEARITY, f"binder {name} shadows an existing binding")
        self._require_well_formed(t, name)
        self.env[name] = t

    def use(self, name: str):
        if name in self.env:
            t = self.env.pop(name)
            self.consumed[name] = t
            return t
        if name in self.consumed:
            raise TypeCheckError(
                LINEARITY, f"{name} is used more than once")
        raise TypeCheckError(UNBOUND, f"{name} is not in scope")

    def absorb_all(self):
        """Discharge every remaining binding (the absurd rule)."""
        for name in list(self.env):
            self.consumed[name] = self.env.pop(name)

    def require_consumed(self, names, context: str):
        left = [n for n in names if n in self.env]
        if left:
            raise TypeCheckError(
                LINEARITY,
                f"{', '.join(left)} bound in {context} but never used")

    def track(self):
        """Names present now; diff later with `used_since`."""
        return set(self.env)

    def used_since(self, snapshot) -> list:
        gone = snapshot - set(self.env)
        return [(n, self.consumed[n]) for n in sorted(gone)]

    def checkpoint(self):
        return dict(self.env), dict(self.consumed)

    def restore(self, saved):
        self.env, self.consumed = dict(saved[0]), dict(saved[1])

    # -- derivation recording ----------------------------------------------

    def emit(self, rule, subject, typ, bound, start):
        children = self.nodes[start:]
        del self.nodes[start:]
        node = Derivation(rule, subject,
                          None if typ is None else type_str(typ),
                          bound, children)
        self.nodes.append(node)
        return node

    # -- bound side conditions ----------------------------------------------

    def _before(self, p: Bound, others: Bound, rule: str, what: str):
        if not (p < others):
            raise TypeCheckError(
                PRIORITY,
                f"{rule}: finished bound {p} must lie strictly below "
                f"{what} (= {others})")

    # -- synthesis ------------------------------------------------------------

    def infer(self, m):
        start = len(self.nodes)
        match m:
            case Var(x):
                t = self.use(x)
                self.emit("T-Var", x, t, BOT, start)
                return t, BOT
            case Unit():
                self.emit("T-Unit", "()", UnitT(), BOT, start)
                return UnitT(), BOT
            case Const("new", ann):
                t = instantiate_constant("new", ann, UnitT())
                self.emit("T-Const", "new", t, BOT, start)
                return t, BOT
            case Const(kind, _):
                raise TypeCheckError(
                    SCHEMA,
                    f"the type of {kind} here is not determined; apply it "
                    f"to an argument")
            case Lam(x, body, ann):
                if ann is None:
                    raise TypeCheckError(
                        SCHEMA,
                        f"cannot infer the argument type of \\{x}. ...; "
                        f"annotate the binder or supply an expected type")
                snap = self.track()
                self.bind(x, ann)
                cod, q = self.infer(body)
                self.require_consumed([x], f"\\{x}. ...")
                captured = self.used_since(snap)
                p = S.minpr_env(captured)
                t = Fn(p, q, ann, cod)
                self.emit("T-Lam", _snip(m), t, BOT, start)
                return t, BOT
            case App(fn, arg):
                t, b = self._infer_app(m, fn, arg, start)
                return t, b
            case Seq(first, second):
                snap_g = self.track()
                t1, p = self.infer(first)
                if t1 != UnitT():
                    raise TypeCheckError(
                        MISMATCH,
                        f"left of ';' must be 1, got {type_str(t1)} "
                        f"in {_snip(first)}")
                snap_d = self.track()
                t2, q = self.infer(second)
                delta = self.used_since(snap_d)
                self._before(p, S.minpr_env(delta), "T-LetUnit",
                             "the continuation's lowest priority")
                self.emit("T-LetUnit", _snip(m), t2, join(p, q), start)
                return t2, join(p, q)
            case Pair(a, b):
                ta, p = self.infer(a)
                snap_d = self.track()
                tb, q = self.infer(b)
                delta = self.used_since(snap_d)
                self._before(p, S.minpr_env(delta), "T-Pair",
                             "the second component's lowest priority")
                t = Prod(ta, tb)
                self.emit("T-Pair", _snip(m), t, join(p, q), start)
                return t, join(p, q)
            case LetPair(x, y, pair, body):
                tp, p = self.infer(pair)
                match tp:
                    case Prod(tx, ty):
                        pass
                    case _:
                        raise TypeCheckError(
                            MISMATCH,
                            f"let (x,y) needs a pair, got {type_str(tp)}")
                return self._letpair_body(m, x, y, tx, ty, p, body, None, start)
            case Inl() | Inr():
                if isinstance(m.ann, Sum):
                    # a wire-stamped injection knows its full sum type
                    bound = self.check(m, m.ann)
                    return m.ann, bound
                which = "inl" if isinstance(m, Inl) else "inr"
                raise TypeCheckError(
                    SCHEMA,
                    f"cannot infer the other summand of {which}; "
                    f"a context must supply the sum type")
            case Case(scrutinee, xl, left, xr, right):
                return self._case(m, scrutinee, xl, left, xr, right, None, start)
            case Absurd(v):
                t, p = self.infer(v)
                if t != VoidT():
                    raise TypeCheckError(
                        MISMATCH, f"absurd needs a 0-typed value, got {type_str(t)}")
                self.absorb_all()
                self.emit("T-Absurd", _snip(m), UnitT(), p, start)
                return UnitT(), p
        raise TypeCheckError(MISMATCH, f"not a core term: {m!r}")

    def _infer_app(self, m, fn, arg, start):
        match fn:
            case Const(kind, ann):
                snap_d = self.track()
                targ, q = self._const_argument(kind, ann, arg)
                delta = self.used_since(snap_d)
                fn_type = instantiate_constant(kind, ann, targ)
                self.emit("T-Const", kind, fn_type, BOT, start)
                # constants have bound bot, so bot < minpr(delta) holds
                # unless delta itself bottoms out
                self._before(BOT, S.minpr_env(delta), "T-App",
                             "the argument's lowest priority")
                self._before(q, fn_type.p, "T-App",
                             "the function's domain bound")
                bound = join(q, fn_type.q)
                self.emit("T-App", _snip(m), fn_type.cod, bound, start)
                return fn_type.cod, bound
            case Lam(x, body, None):
                # beta-redex with unannotated binder: type the argument
                # first, then the body (this is how `let` checks)
                snap_d = self.track()
                targ, q = self.infer(arg)
                delta = self.used_since(snap_d)
                lam_start = len(self.nodes)
                snap_g = self.track()
                self.bind(x, targ)
                cod, qb = self.infer(body)
                self.require_consumed([x], f"\\{x}. ...")
                captured = self.used_since(snap_g)
                p_dom = S.minpr_env([(n, t) for n, t in captured if n != x])
                self.emit("T-Lam", _snip(fn),
                          Fn(p_dom, qb, targ, cod), BOT, lam_start)
                self._before(BOT, S.minpr_env(delta), "T-App",
                             "the argument's lowest priority")
                self._before(q, p_dom, "T-App", "the function's domain bound")
                bound = join(q, qb)
                self.emit("T-App", _snip(m), cod, bound, start)
                return cod, bound
            case _:
                tf, p = self.infer(fn)
                match tf:
                    case Fn(pp, qq, dom, cod):
                        pass
                    case _:
                        raise TypeCheckError(
                            MISMATCH,
                            f"cannot apply a non-function of type {type_str(tf)}")
                snap_d = self.track()
                q = self.check(arg, dom)
                delta = self.used_since(snap_d)
                self._before(p, S.minpr_env(delta), "T-App",
                             "the argument's lowest priority")
                self._before(q, pp, "T-App", "the function's domain bound")
                bound = join(p, q, qq)
                self.emit("T-App", _snip(m), cod, bound, start)
                return cod, bound

    def _const_argument(self, kind, ann, arg):
        """Type the argument of a constant, steering the payload of a
        syntactic `send` pair by the channel's session type."""
        if kind == "send":
            match arg:
                case Pair(payload, chan):
                    start = len(self.nodes)
                    # channel first to learn the payload type; the pair's
                    # own left-before-right priority condition still holds
                    # because payloads are values (bound bot)
                    saved = self.checkpoint()
                    nodes_mark = len(self.nodes)
                    tc, qc = self.infer(chan)
                    match tc:
                        case Sess(Send(_, expected, _)):
                            self.restore(saved)
                            del self.nodes[nodes_mark:]
                            p = self.check(payload, expected)
                            snap_d = self.track()
                            tc, qc = self.infer(chan)
                            delta = self.used_since(snap_d)
                            self._before(p, S.minpr_env(delta), "T-Pair",
                                         "the second component's lowest priority")
                            t = Prod(expected, tc)
                            self.emit("T-Pair", _snip(arg), t, join(p, qc), start)
                            return t, join(p, qc)
                        case _:
                            self.restore(saved)
                            del self.nodes[nodes_mark:]
        return self.infer(arg)

    def _letpair_body(self, m, x, y, tx, ty, p, body, expected, start):
        snap_d = self.track()
        self.bind(x, tx)
        self.bind(y, ty)
        if expected is None:
            t, q = self.infer(body)
        else:
            t, q = expected, self.check(body, expected)
        self.require_consumed([x, y], "let (x,y) = ...")
        delta = [(n, t2) for n, t2 in self.used_since(snap_d) if n not in (x, y)]
        low = meet(S.minpr_env(delta), minpr(tx), minpr(ty))
        self._before(p, low, "T-LetPair",
                     "the continuation's lowest priority")
        self.emit("T-LetPair", _snip(m), t, join(p, q), start)
        return t, join(p, q)

    def _case(self, m, scrutinee, xl, left, xr, right, expected, start):
        ts, p = self.infer(scrutinee)
        match ts:
            case Sum(tl, tr):
                pass
            case _:
                raise TypeCheckError(
                    MISMATCH, f"case needs a sum, got {type_str(ts)}")
        saved = self.checkpoint()
        snap = self.track()
        self.bind(xl, tl)
        if expected is None:
            t_left, q_left = self.infer(left)
        else:
            t_left, q_left = expected, self.check(left, expected)
        self.require_consumed([xl], "the inl branch")
        used_left = {n for n, _ in self.used_since(snap) if n != xl}
        env_after = self.checkpoint()
        self.restore(saved)
        snap = self.track()
        self.bind(xr, tr)
        if expected is None:
            t_right, q_right = self.infer(right)
        else:
            t_right, q_right = expected, self.check(right, expected)
        self.require_consumed([xr], "the inr branch")
        used_right = {n for n, _ in self.used_since(snap) if n != xr}
        if used_left != used_right:
            only_l = sorted(used_left - used_right)
            only_r = sorted(used_right - used_left)
            detail = "; ".join(filter(None, [
                f"only inl uses {', '.join(only_l)}" if only_l else "",
                f"only inr uses {', '.join(only_r)}" if only_r else "",
            ]))
            raise TypeCheckError(
                LINEARITY, f"case branches must use the same channels ({detail})")
        if t_left != t_right:
            raise TypeCheckError(
                MISMATCH,
                f"case branches disagree: {type_str(t_left)} vs "
                f"{type_str(t_right)}")
        if q_left != q_right:
            raise TypeCheckError(
                PRIORITY,
                f"case branches must have the same bound, got {q_left} "
                f"and {q_right}")
        self.restore(env_after)
        delta = [(n, t2) for n, t2 in self.consumed.items() if n in used_left]
        self._before(p, S.minpr_env(delta), "T-CaseSum",
                     "the branches' lowest priority")
        self.emit("T-CaseSum", _snip(m), t_left, join(p, q_left), start)
        return t_left, join(p, q_left)

    # -- checking against an expected type ------------------------------------

    def check(self, m, expected) -> Bound:
        start = len(self.nodes)
        match m, expected:
            case Inl(v), Sum(tl, tr):
                if minpr(tl) != minpr(tr):
                    raise TypeCheckError(
                        PRIORITY,
                        f"summands must share their lowest priority: "
                        f"{type_str(tl)} vs {type_str(tr)}")
                p = self.check(v, tl)
                self.emit("T-Inl", _snip(m), expected, p, start)
                return p
            case Inr(v), Sum(tl, tr):
                if minpr(tl) != minpr(tr):
                    raise TypeCheckError(
                        PRIORITY,
                        f"summands must share their lowest priority: "
                        f"{type_str(tl)} vs {type_str(tr)}")
                p = self.check(v, tr)
                self.emit("T-Inr", _snip(m), expected, p, start)
                return p
            case (Inl() | Inr()), _:
                raise TypeCheckError(
                    MISMATCH,
                    f"{_snip(m)} cannot have non-sum type {type_str(expected)}")
            case Pair(a, b), Prod(ta, tb):
                p = self.check(a, ta)
                snap_d = self.track()
                q = self.check(b, tb)
                delta = self.used_since(snap_d)
                self._before(p, S.minpr_env(delta), "T-Pair",
                             "the second component's lowest priority")
                self.emit("T-Pair", _snip(m), expected, join(p, q), start)
                return join(p, q)
            case Lam(x, body, ann), Fn(pp, qq, dom, cod):
                if ann is not None and ann != dom:
                    raise TypeCheckError(
                        MISMATCH,
                        f"binder annotation {type_str(ann)} differs from "
                        f"expected domain {type_str(dom)}")
                snap = self.track()
                self.bind(x, dom)
                qb = self.check(body, cod)
                self.require_consumed([x], f"\\{x}. ...")
                captured = self.used_since(snap)
                p_dom = S.minpr_env([(n, t) for n, t in captured if n != x])
                if p_dom != pp or qb != qq:
                    raise TypeCheckError(
                        MISMATCH,
                        f"function has bounds [{p_dom},{qb}], expected "
                        f"[{pp},{qq}]")
                self.emit("T-Lam", _snip(m), expected, BOT, start)
                return BOT
            case Lam(), _:
                raise TypeCheckError(
                    MISMATCH,
                    f"{_snip(m)} cannot have non-function type "
                    f"{type_str(expected)}")
            case Seq(first, second), _:
                t1, p = self.infer(first)
                if t1 != UnitT():
                    raise TypeCheckError(
                        MISMATCH,
                        f"left of ';' must be 1, got {type_str(t1)}")
                snap_d = self.track()
                q = self.check(second, expected)
                delta = self.used_since(snap_d)
                self._before(p, S.minpr_env(delta), "T-LetUnit",
                             "the continuation's lowest priority")
                self.emit("T-LetUnit", _snip(m), expected, join(p, q), start)
                return join(p, q)
            case LetPair(x, y, pair, body), _:
                tp, p = self.infer(pair)
                match tp:
                    case Prod(tx, ty):
                        pass
                    case _:
                        raise TypeCheckError(
                            MISMATCH,
                            f"let (x,y) needs a pair, got {type_str(tp)}")
                _, bound = self._letpair_body(
                    m, x, y, tx, ty, p, body, expected, start)
                return bound
            case Case(scrutinee, xl, left, xr, right), _:
                _, bound = self._case(
                    m, scrutinee, xl, left, xr, right, expected, start)
                return bound
            case Absurd(v), _:
                t, p = self.infer(v)
                if t != VoidT():
                    raise TypeCheckError(
                        MISMATCH,
                        f"absurd needs a 0-typed value, got {type_str(t)}")
                self.absorb_all()
                self.emit("T-Absurd", _snip(m), expected, p, start)
                return p
            case _:
                t, bound = self.infer(m)
                if t != expected:
                    raise TypeCheckError(
                        MISMATCH,
                        f"{_snip(m)} : {type_str(t)}, expected "
                        f"{type_str(expected)}")
                return bound

    # -- configurations ---------------------------------------------------------

    def config(self, c) -> Flag:
        start = len(self.nodes)
        match c:
            case Thread(flag, term):
                term = S.elaborate(term)
                if flag is Flag.MAIN:
                    t, p = self.infer(term)
                    self.emit("T-Main", _snip(term), t, p, start)
                else:
                    p = self.check(term, UnitT())
                    self.emit("T-Child", _snip(term), UnitT(), p, start)
                return flag
            case Res(x, y, body, ann):
                if ann is None:
                    raise TypeCheckError(
                        NO_ANNOTATION,
                        f"restriction (nu {x} {y}) carries no session type; "
                        f"annotate it as (nu {x} {y} : S)")
                self.bind(x, Sess(ann))
                self.bind(y, Sess(dual(ann)))
                flag = self.config(body)
                self.require_consumed([x, y], f"(nu {x} {y})")
                self.emit("T-Res", f"(nu {x} {y})", None, None, start)
                return flag
            case Par(left, right):
                fl = self.config(left)
                fr = self.config(right)
                if fl is Flag.MAIN and fr is Flag.MAIN:
                    raise TypeCheckError(
                        MAIN_CLASH, "parallel composition of two main threads")
                flag = Flag.MAIN if Flag.MAIN in (fl, fr) else Flag.CHILD
                self.emit("T-Par", "... | ...", None, None, start)
                return flag
        raise TypeCheckError(MISMATCH, f"not a configuration: {c!r}")


def typecheck_term(m, env=None, expected=None) -> TermResult:
    """Check a closed-up term against `env` (a name -> type mapping).

    Sugar is elaborated first.  The environment must be consumed
    exactly; the result carries the synthesised type, the priority
    bound, and a derivation tree.
    """
    checker = Checker(dict(env or {}))
    term = S.elaborate(m)
    try:
        if expected is None:
            t, bound = checker.infer(term)
        else:
            t, bound = expected, checker.check(term, expected)
    except ValueError as exc:            # an unfilled priority hole surfaced
        raise TypeCheckError(SCHEMA, str(exc)) from exc
    if checker.env:
        left = ", ".join(sorted(checker.env))
        raise TypeCheckError(LINEARITY, f"{left} never used")
    return TermResult(t, bound, checker.nodes[0])


def typecheck_config(c, env=None) -> ConfigResult:
    """Check a configuration; returns its flag (main or child)."""
    checker = Checker(dict(env or {}))
    try:
        flag = checker.config(c)
    except ValueError as exc:            # an unfilled priority hole surfaced
        raise TypeCheckError(SCHEMA, str(exc)) from exc
    if checker.env:
        left = ", ".join(sorted(checker.env))
        raise TypeCheckError(LINEARITY, f"{left} never used")
    return ConfigResult(flag, checker.nodes[0])
