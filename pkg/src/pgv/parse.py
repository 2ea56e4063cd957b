"""Concrete syntax for the functional session calculus.

Terms
    x                                   variable
    ()                                  unit
    (M, N)                              pair
    \\x. M   \\(). M   \\(x,y). M          abstractions
    M N                                 application (left associative)
    M; N                                sequencing (right associative, loosest)
    let x = M in N                      let (sugar)
    let (x, y) = M in N                 pair split; either slot may be ()
    inl M    inr M    absurd M          sums
    case M { inl x -> N1 | inr y -> N2 }
    new[S] ()  spawn M  send (M, x)  recv x  close x  wait x  link (x, y)
    fork[S] M                           fork sugar
    select[S] inl x   select[S] inr x   choice sugar
    offer M { inl x -> N1 | inr y -> N2 }    offer M {}

Session types and types
    !o T . S    ?o T . S    end!o    end?o
    (+)o{ S ; S' }   (&)o{ S ; S' }   (+)o{}   (&)o{}      choice sugar
    T * U    T + U    1    0    T -o-> U    T -o[p,q]-> U
    priorities are naturals; bounds also admit  bot  and  top;
    a priority written ?name is a hole for the annotation search.

Configurations
    main M      child M      C | D      (nu x y : S) C      (nu x y) C

Comments run from `--` to end of line.  Binders are renamed apart while
parsing (the paper-style idiom `let x = send ((), x) in ...` is fine).
"""

from __future__ import annotations

import re

from . import syntax as S
from .syntax import (
    Absurd, App, Case, Const, EndR, EndS, Fn, Hole, Inl, Inr, Lam, LamPair,
    LamUnit, Let, LetPair, Offer, OfferS, Pair, Prod, Recv, Res, SelectS,
    Send, Seq, Sess, Sum, Thread, Unit, UnitT, Var, VoidT, Par, Flag,
)


class ParseError(Exception):
    pass


KEYWORDS = {
    "let", "in", "case", "inl", "inr", "absurd", "spawn", "new", "send",
    "recv", "close", "wait", "link", "fork", "select", "offer", "main",
    "child", "nu", "end", "bot", "top", "halt", "par",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_'~]*)
  | (?P<hole>\?[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>\(\+\)|\(&\)|<->|->|-o|\\|[()\[\]{},;.:|!?*+&=<>])
""", re.VERBOSE)


def tokenize(src: str):
    """Yield (kind, text, pos) triples; kind is int/ident/sym/kw/hole."""
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            line = src.count("\n", 0, pos) + 1
            raise ParseError(f"line {line}: stray character {src[pos]!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind in ("ws", "comment"):
            continue
        text = m.group()
        if kind == "ident" and text in KEYWORDS:
            kind = "kw"
        tokens.append((kind, text, m.start()))
    tokens.append(("eof", "", len(src)))
    return tokens


class _Scope:
    """Parse-time renaming: binders already used in this parse get fresh
    names so the output satisfies the global-uniqueness invariant."""

    def __init__(self):
        self.env = {}      # source name -> current unique name (lexical)
        self.used = set()  # every name handed out so far

    def bind(self, name):
        if name in self.used:
            unique = S.fresh(name)
        else:
            unique = name
        self.used.add(unique)
        old = self.env.get(name)
        self.env[name] = unique
        return unique, (name, old)

    def unbind(self, saved):
        name, old = saved
        if old is None:
            self.env.pop(name, None)
        else:
            self.env[name] = old

    def lookup(self, name):
        got = self.env.get(name, name)
        self.used.add(got)
        return got


class Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = tokenize(src)
        self.i = 0
        self.scope = _Scope()

    # -- token plumbing ----------------------------------------------------

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        if t[0] != "eof":
            self.i += 1
        return t

    def at(self, kind, text=None, k=0):
        t = self.peek(k)
        return t[0] == kind and (text is None or t[1] == text)

    def eat(self, kind, text=None):
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind, text=None):
        t = self.next()
        if t[0] != kind or (text is not None and t[1] != text):
            want = text or kind
            line = self.src.count("\n", 0, t[2]) + 1
            raise ParseError(f"line {line}: expected {want!r}, found {t[1]!r}")
        return t

    def fail(self, msg):
        t = self.peek()
        line = self.src.count("\n", 0, t[2]) + 1
        raise ParseError(f"line {line}: {msg} (at {t[1]!r})")

    # -- priorities, types -------------------------------------------------

    def priority(self):
        if self.at("int"):
            return int(self.next()[1])
        if self.at("hole"):
            return Hole(self.next()[1][1:])
        self.fail("expected a priority")

    def bound(self):
        if self.at("kw", "bot"):
            self.next()
            return S.BOT
        if self.at("kw", "top"):
            self.next()
            return S.TOP
        if self.at("int"):
            return S.fin(int(self.next()[1]))
        self.fail("expected a priority bound (nat, bot, or top)")

    def session(self):
        if self.eat("sym", "("):
            s = self.session()
            self.expect("sym", ")")
            return s
        if self.eat("sym", "!"):
            o = self.priority()
            payload = self.type_atom()
            self.expect("sym", ".")
            return Send(o, payload, self.session())
        if self.eat("sym", "?"):
            o = self.priority()
            payload = self.type_atom()
            self.expect("sym", ".")
            return Recv(o, payload, self.session())
        if self.eat("kw", "end"):
            if self.eat("sym", "!"):
                return EndS(self.priority())
            self.expect("sym", "?")
            return EndR(self.priority())
        if self.at("sym", "(+)") or self.at("sym", "(&)"):
            which = self.next()[1]
            o = self.priority()
            self.expect("sym", "{")
            if self.eat("sym", "}"):
                branches = ()
            else:
                a = self.session()
                self.expect("sym", ";")
                b = self.session()
                self.expect("sym", "}")
                branches = (a, b)
            node = SelectS(o, branches) if which == "(+)" else OfferS(o, branches)
            if any(isinstance(p, Hole) for p in _sugar_prios(node)):
                self.fail("priority holes are not supported inside choice sugar")
            return S.expand_session(node)
        self.fail("expected a session type")

    def type_atom(self):
        if self.at("int", "1"):
            self.next()
            return UnitT()
        if self.at("int", "0"):
            self.next()
            return VoidT()
        if self.eat("sym", "("):
            t = self.type()
            self.expect("sym", ")")
            return t
        return Sess(self.session())

    def type(self):
        left = self.type_atom()
        if self.at("sym", "*") or self.at("sym", "+"):
            op = self.next()[1]
            right = self.type()
            return Prod(left, right) if op == "*" else Sum(left, right)
        if self.eat("sym", "-o"):
            if self.eat("sym", "["):
                p = self.bound()
                self.expect("sym", ",")
                q = self.bound()
                self.expect("sym", "]")
            else:
                p, q = S.TOP, S.BOT
            self.expect("sym", "->")
            return Fn(p, q, left, self.type())
        return left

    # -- terms ---------------------------------------------------------------

    def term(self):
        t = self.big_term()
        if self.eat("sym", ";"):
            return Seq(t, self.term())
        return t

    def big_term(self):
        """Forms whose body extends as far right as possible."""
        if self.at("kw", "let"):
            return self.let_form()
        if self.at("sym", "\\"):
            return self.lambda_form()
        return self.app_term()

    def let_form(self):
        self.expect("kw", "let")
        if self.eat("sym", "("):
            first_unit = bool(self.eat("sym", ")"))
            if first_unit:
                # `let () = ...` is just sequencing
                self.expect("sym", "=")
                m = self.term_until_in()
                self.expect("kw", "in")
                return Seq(m, self.term())
            x_src = None if self.at("sym", "(") else self.expect("ident")[1]
            if x_src is None:  # `let ((), y) = ...`
                self.expect("sym", "(")
                self.expect("sym", ")")
            self.expect("sym", ",")
            y_src = None
            if self.eat("sym", "("):
                self.expect("sym", ")")
            else:
                y_src = self.expect("ident")[1]
            self.expect("sym", ")")
            self.expect("sym", "=")
            m = self.term_until_in()
            self.expect("kw", "in")
            saves = []
            if x_src is None:
                x = S.fresh("u")
            else:
                x, sv = self.scope.bind(x_src)
                saves.append(sv)
            if y_src is None:
                y = S.fresh("u")
            else:
                y, sv = self.scope.bind(y_src)
                saves.append(sv)
            body = self.term()
            for sv in reversed(saves):
                self.scope.unbind(sv)
            if x_src is None:
                body = Seq(Var(x), body)
            if y_src is None:
                body = Seq(Var(y), body)
            return LetPair(x, y, m, body)
        x_src = self.expect("ident")[1]
        self.expect("sym", "=")
        m = self.term_until_in()
        self.expect("kw", "in")
        x, sv = self.scope.bind(x_src)
        body = self.term()
        self.scope.unbind(sv)
        return Let(x, m, body)

    def term_until_in(self):
        # the bound value of a let; same grammar as term (the `in` keyword
        # terminates it naturally since `in` never starts a term)
        return self.term()

    def lambda_form(self):
        self.expect("sym", "\\")
        if self.eat("sym", "("):
            if self.eat("sym", ")"):
                self.expect("sym", ".")
                return LamUnit(self.term())
            x_src = self.expect("ident")[1]
            self.expect("sym", ",")
            y_src = self.expect("ident")[1]
            self.expect("sym", ")")
            self.expect("sym", ".")
            x, svx = self.scope.bind(x_src)
            y, svy = self.scope.bind(y_src)
            body = self.term()
            self.scope.unbind(svy)
            self.scope.unbind(svx)
            return LamPair(x, y, body)
        x_src = self.expect("ident")[1]
        ann = None
        if self.eat("sym", ":"):
            ann = self.type()
        self.expect("sym", ".")
        x, sv = self.scope.bind(x_src)
        body = self.term()
        self.scope.unbind(sv)
        return Lam(x, body, ann)

    def app_term(self):
        if self.at("kw") and self.peek()[1] in ("inl", "inr", "absurd"):
            kw = self.next()[1]
            arg = self.app_term()
            return {"inl": Inl, "inr": Inr, "absurd": Absurd}[kw](arg)
        t = self.atom()
        while self._starts_atom():
            t = App(t, self.atom())
        return t

    def _starts_atom(self):
        k, text, _ = self.peek()
        if k in ("ident",):
            return True
        if k == "sym" and text in ("(", "\\"):
            return text == "("
        if k == "kw" and text in ("new", "spawn", "send", "recv", "close",
                                  "wait", "link", "fork", "select", "offer",
                                  "case"):
            return True
        return False

    def atom(self):
        k, text, _ = self.peek()
        if k == "ident":
            return Var(self.scope.lookup(self.next()[1]))
        if k == "sym" and text == "(":
            self.next()
            if self.eat("sym", ")"):
                return Unit()
            t = self.term()
            if self.eat("sym", ","):
                u = self.term()
                self.expect("sym", ")")
                return Pair(t, u)
            self.expect("sym", ")")
            return t
        if k == "kw" and text in ("spawn", "send", "recv", "close", "wait", "link"):
            self.next()
            return Const(text)
        if k == "kw" and text in ("new", "fork"):
            self.next()
            ann = None
            if self.eat("sym", "["):
                ann = self.session()
                self.expect("sym", "]")
            return Const(text, ann)
        if k == "kw" and text == "select":
            self.next()
            ann = None
            if self.eat("sym", "["):
                ann = self.session()
                self.expect("sym", "]")
            side = self.expect("kw")[1]
            if side not in ("inl", "inr"):
                self.fail("select needs inl or inr")
            return Const("select_" + side, ann)
        if k == "kw" and text == "case":
            return self.case_form()
        if k == "kw" and text == "offer":
            return self.offer_form()
        self.fail("expected a term")

    def case_form(self):
        self.expect("kw", "case")
        scrutinee = self.app_term()
        self.expect("sym", "{")
        self.expect("kw", "inl")
        xl_src = self.expect("ident")[1]
        self.expect("sym", "->")
        xl, sv = self.scope.bind(xl_src)
        left = self.term()
        self.scope.unbind(sv)
        self.expect("sym", "|")
        self.expect("kw", "inr")
        xr_src = self.expect("ident")[1]
        self.expect("sym", "->")
        xr, sv = self.scope.bind(xr_src)
        right = self.term()
        self.scope.unbind(sv)
        self.expect("sym", "}")
        return Case(scrutinee, xl, left, xr, right)

    def offer_form(self):
        self.expect("kw", "offer")
        scrutinee = self.app_term()
        self.expect("sym", "{")
        if self.eat("sym", "}"):
            return Offer(scrutinee, None)
        self.expect("kw", "inl")
        xl_src = self.expect("ident")[1]
        self.expect("sym", "->")
        xl, sv = self.scope.bind(xl_src)
        left = self.term()
        self.scope.unbind(sv)
        self.expect("sym", "|")
        self.expect("kw", "inr")
        xr_src = self.expect("ident")[1]
        self.expect("sym", "->")
        xr, sv = self.scope.bind(xr_src)
        right = self.term()
        self.scope.unbind(sv)
        self.expect("sym", "}")
        return Offer(scrutinee, (xl, left, xr, right))

    # -- configurations ------------------------------------------------------

    def config(self):
        left = self.config_atom()
        if self.eat("sym", "|"):
            return Par(left, self.config())
        return left

    def config_atom(self):
        if self.eat("kw", "main"):
            return Thread(Flag.MAIN, self.term())
        if self.eat("kw", "child"):
            return Thread(Flag.CHILD, self.term())
        if self.at("sym", "(") and self.at("kw", "nu", k=1):
            self.next()
            self.expect("kw", "nu")
            x_src = self.expect("ident")[1]
            y_src = self.expect("ident")[1]
            ann = None
            if self.eat("sym", ":"):
                ann = self.session()
            self.expect("sym", ")")
            x, svx = self.scope.bind(x_src)
            y, svy = self.scope.bind(y_src)
            body = self.config()
            self.scope.unbind(svy)
            self.scope.unbind(svx)
            return Res(x, y, body, ann)
        if self.eat("sym", "("):
            c = self.config()
            self.expect("sym", ")")
            return c
        self.fail("expected a configuration")


def _sugar_prios(node):
    out = [node.prio]
    for b in node.branches:
        out.extend(S.session_priorities(b))
    return out


def _config_ahead(p: Parser) -> bool:
    # a configuration begins with main/child/nu, possibly under parentheses
    k = 0
    while p.at("sym", "(", k=k):
        k += 1
    return (p.at("kw", "main", k=k) or p.at("kw", "child", k=k)
            or (k > 0 and p.at("kw", "nu", k=k)))


def parse_term(src: str):
    p = Parser(src)
    t = p.term()
    p.expect("eof")
    return t


def parse_type(src: str):
    p = Parser(src)
    t = p.type()
    p.expect("eof")
    return t


def parse_session(src: str):
    p = Parser(src)
    s = p.session()
    p.expect("eof")
    return s


def parse_program(src: str):
    """Parse a whole source file: either a term or a configuration."""
    p = Parser(src)
    if _config_ahead(p):
        out = p.config()
    else:
        out = p.term()
    p.expect("eof")
    return out
