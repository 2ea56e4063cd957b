"""Printers for types, terms, and configurations.

Output re-parses to the same tree (module the parser's binder renaming),
which the round-trip tests rely on.
"""

from __future__ import annotations

from . import syntax as S
from .syntax import (
    Absurd, App, Case, Const, EndR, EndS, Fn, Inl, Inr, Lam, LamPair,
    LamUnit, Let, LetPair, Offer, Pair, Par, Prod, Recv, Res, Send, Seq,
    Sess, Sum, Thread, Unit, UnitT, Var, VoidT, Flag,
)


# -- types -------------------------------------------------------------------

def session_str(s) -> str:
    match s:
        case Send(o, payload, cont):
            return f"!{o} {_payload_str(payload)} . {session_str(cont)}"
        case Recv(o, payload, cont):
            return f"?{o} {_payload_str(payload)} . {session_str(cont)}"
        case EndS(o):
            return f"end!{o}"
        case EndR(o):
            return f"end?{o}"
        case S.SelectS(o, bs) | S.OfferS(o, bs):
            mark = "(+)" if isinstance(s, S.SelectS) else "(&)"
            if bs == ():
                return f"{mark}{o}{{}}"
            return (f"{mark}{o}{{{session_str(bs[0])} ; "
                    f"{session_str(bs[1])}}}")
    raise TypeError(f"not a session type: {s!r}")


def _payload_str(t) -> str:
    match t:
        case UnitT():
            return "1"
        case VoidT():
            return "0"
        case Sess(EndS() | EndR()):
            return session_str(t.session)
        case _:
            return f"({type_str(t)})"


def type_str(t) -> str:
    match t:
        case UnitT():
            return "1"
        case VoidT():
            return "0"
        case Sess(s):
            return session_str(s)
        case Prod(a, b):
            return f"{_type_atom_str(a)} * {_type_atom_str(b)}"
        case Sum(a, b):
            return f"{_type_atom_str(a)} + {_type_atom_str(b)}"
        case Fn(p, q, dom, cod):
            arrow = "-o->" if (p, q) == (S.TOP, S.BOT) else f"-o[{p},{q}]->"
            return f"{_type_atom_str(dom)} {arrow} {type_str(cod)}"
    raise TypeError(f"not a type: {t!r}")


def _type_atom_str(t) -> str:
    match t:
        case UnitT() | VoidT() | Sess(_):
            return type_str(t)
        case _:
            return f"({type_str(t)})"


# -- terms ---------------------------------------------------------------------

_CONST_SYNTAX = {
    "link": "link", "new": "new", "spawn": "spawn", "send": "send",
    "recv": "recv", "close": "close", "wait": "wait", "fork": "fork",
    "select_inl": ("select", "inl"), "select_inr": ("select", "inr"),
}


def _const_str(c: Const) -> str:
    ann = f"[{session_str(c.ann)}]" if c.ann is not None else ""
    entry = _CONST_SYNTAX[c.kind]
    if isinstance(entry, tuple):
        return f"{entry[0]}{ann} {entry[1]}"
    return f"{entry}{ann}"


def term_str(m) -> str:
    match m:
        case Seq(first, second):
            return f"{_seq_head_str(first)}; {term_str(second)}"
        case Lam(x, body):
            ann = f" : {type_str(m.ann)}" if m.ann is not None else ""
            return f"\\{x}{ann}. {term_str(body)}"
        case LamUnit(body):
            return f"\\(). {term_str(body)}"
        case LamPair(x, y, body):
            return f"\\({x},{y}). {term_str(body)}"
        case Let(x, value, body):
            return f"let {x} = {term_str(value)} in {term_str(body)}"
        case LetPair(x, y, pair, body):
            return f"let ({x},{y}) = {term_str(pair)} in {term_str(body)}"
        case _:
            return _app_str(m)


def _seq_head_str(m) -> str:
    # the left operand of `;` must not itself swallow the `;`
    match m:
        case Seq() | Lam() | LamUnit() | LamPair() | Let() | LetPair():
            return f"({term_str(m)})"
        case _:
            return _app_str(m)


def _app_str(m) -> str:
    match m:
        case App(fn, arg):
            return f"{_fn_str(fn)} {atom_str(arg)}"
        case Inl(v):
            return f"inl {_app_str(v)}"
        case Inr(v):
            return f"inr {_app_str(v)}"
        case Absurd(v):
            return f"absurd {_app_str(v)}"
        case _:
            return atom_str(m)


def _fn_str(m) -> str:
    match m:
        case App() | Var() | Const() | Unit() | Pair() | Case() | Offer():
            return _app_str(m)
        case _:
            return f"({term_str(m)})"


def atom_str(m) -> str:
    match m:
        case Var(name):
            return name
        case Unit():
            return "()"
        case Pair(a, b):
            return f"({term_str(a)}, {term_str(b)})"
        case Const():
            s = _const_str(m)
            return f"({s})" if " " in s else s
        case Case(scrutinee, xl, left, xr, right):
            return (f"case {_app_str(scrutinee)} {{ inl {xl} -> {term_str(left)}"
                    f" | inr {xr} -> {term_str(right)} }}")
        case Offer(scrutinee, None):
            return f"offer {_app_str(scrutinee)} {{}}"
        case Offer(scrutinee, (xl, left, xr, right)):
            return (f"offer {_app_str(scrutinee)} {{ inl {xl} -> {term_str(left)}"
                    f" | inr {xr} -> {term_str(right)} }}")
        case _:
            return f"({term_str(m)})"


# -- configurations ------------------------------------------------------------

def config_str(c) -> str:
    match c:
        case Par(left, right):
            return f"{_config_atom_str(left)} | {config_str(right)}"
        case Res(x, y, body, ann):
            colon = f" : {session_str(ann)}" if ann is not None else ""
            return f"(nu {x} {y}{colon}) {config_str(body)}"
        case Thread(flag, term):
            kw = "main" if flag is Flag.MAIN else "child"
            return f"{kw} {term_str(term)}"
    raise TypeError(f"not a configuration: {c!r}")


def _config_atom_str(c) -> str:
    match c:
        case Thread():
            return config_str(c)
        case _:
            return f"({config_str(c)})"
