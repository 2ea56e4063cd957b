"""Random well-typed inputs, priority-annotation search, schedulers.

The generators build communication networks around one global priority
order: every communication event gets a strictly larger priority than
the one scheduled before it (stride two, so selections leave room for
the close their expansion inserts), and every participant performs its
events in that order.  Well-typedness then holds by construction —
whenever a participant acts, everything else it still holds lies
strictly above — and so does deadlock freedom.

Choice events give both branches the same protocol, so the offering
side can carry the rest of its behaviour in either branch and the
typing rule's shared-context requirement is met; the selecting side
still flips a coin between the two labels.

`find_annotations` searches priority skeletons: types may leave
priorities open (`?o`), and the search tries every assignment from a
bounded range in order, so the first hit is the pointwise-least one.
When no assignment works it looks for an explanation: the ordering
constraints any assignment would have to satisfy, mined from each
thread's straight-line action sequence, with a cycle among them
returned as the unsatisfiability witness.
"""

from __future__ import annotations

import dataclasses
import itertools
import random
from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

from . import pcp as P
from . import syntax as S
from .pcp import PcpTypeError, pcp_dual, pcp_typecheck
from .syntax import (
    App, Const, Flag, Hole, Lam, LamUnit, Let, LetPair, Offer, Pair, Par,
    Res, Seq, Thread, Unit, Var, fresh,
)
from .typecheck import TypeCheckError, typecheck_config, typecheck_term


# -- priority holes -----------------------------------------------------------


_ATOMS = (str, int, bool, type(None), S.Flag)


def priority_holes(obj) -> list:
    """Hole names in first-occurrence order."""
    seen: list = []

    def walk(o):
        if isinstance(o, Hole):
            if o.name not in seen:
                seen.append(o.name)
        elif isinstance(o, tuple):
            for item in o:
                walk(item)
        elif dataclasses.is_dataclass(o) and not isinstance(o, _ATOMS):
            for f in dataclasses.fields(o):
                walk(getattr(o, f.name))

    walk(obj)
    return seen


def fill_holes(obj, assignment: dict):
    """Replace every hole with its value from `assignment`."""

    def walk(o):
        if isinstance(o, Hole):
            if o.name not in assignment:
                raise KeyError(f"no value for priority hole ?{o.name}")
            return assignment[o.name]
        if isinstance(o, tuple):
            return tuple(walk(item) for item in o)
        if dataclasses.is_dataclass(o) and not isinstance(o, _ATOMS):
            changes = {}
            for f in dataclasses.fields(o):
                old = getattr(o, f.name)
                new = walk(old)
                if new is not old:
                    changes[f.name] = new
            return dataclasses.replace(o, **changes) if changes else o
        return o

    return walk(obj)


# -- annotation search --------------------------------------------------------


_PCP_NODES = (P.Link, P.Res, P.Par, P.Halt, P.Send, P.Recv, P.Close, P.Wait,
              P.SelectL, P.SelectR, P.Offer, P.OfferNone, P.SendFree)


def _well_typed(subject) -> bool:
    try:
        if isinstance(subject, _PCP_NODES):
            pcp_typecheck(subject)
        elif isinstance(subject, (Thread, Par, Res)):
            typecheck_config(subject)
        else:
            typecheck_term(subject)
        return True
    except (TypeCheckError, PcpTypeError):
        return False


@dataclass
class AnnotationSearch:
    assignment: Optional[dict]          # hole name -> priority, or None
    witness: Optional[frozenset]        # {"a < b", ...} proving unsat
    tried: int

    @property
    def found(self) -> bool:
        return self.assignment is not None


def find_annotations(subject, k: int) -> AnnotationSearch:
    """Try every priority assignment drawn from 0..k, in order, so the
    first satisfying one is the pointwise-least.  On failure, hunt for a
    cyclic ordering constraint as a proof that no range would do."""
    holes = priority_holes(subject)
    if not holes:
        ok = _well_typed(subject)
        return AnnotationSearch({} if ok else None, None, 1)
    tried = 0
    for values in itertools.product(range(k + 1), repeat=len(holes)):
        assignment = dict(zip(holes, values))
        tried += 1
        if _well_typed(fill_holes(subject, assignment)):
            return AnnotationSearch(assignment, None, tried)
    witness = None
    try:
        witness = _constraint_cycle(_order_constraints(subject))
    except ValueError:
        pass
    return AnnotationSearch(None, witness, tried)


def _prio_atom(p):
    """A priority as a constraint-graph node: an int or a hole name."""
    if isinstance(p, Hole):
        return p.name
    if isinstance(p, int):
        return p
    raise ValueError(f"not an atomic priority: {p!r}")


def _order_constraints(subject) -> list:
    """Strict orderings every assignment must satisfy: each thread acts
    on its channels in run order, and each action must lie strictly
    below the rest of what the thread holds — in particular below its
    own next action.  Works on straight-line communication skeletons."""
    if isinstance(subject, _PCP_NODES):
        sequences = _pcp_sequences(subject)
    else:
        sequences = _pgv_sequences(subject)
    out = []
    for seq in sequences:
        for a, b in zip(seq, seq[1:]):
            out.append((a, b))
    return out


def _pcp_sequences(p) -> list:
    sequences: list = []
    env: dict = {}

    def head(t):
        return _prio_atom(t.prio)

    def walk(q, ops):
        match q:
            case P.Res(x, y, body, ann):
                if ann is None:
                    raise ValueError("skeleton restriction lacks a type")
                env[x] = ann
                env[y] = pcp_dual(ann)
                walk(body, ops)
            case P.Par(l, r):
                own: list = []
                sequences.append(own)
                walk(l, own)
                walk(r, ops)
            case P.Halt():
                pass
            case P.Close(c, body) | P.Wait(c, body):
                ops.append(head(env.pop(c)))
                walk(body, ops)
            case P.Send(c, binder, body):
                t = env.pop(c)
                ops.append(head(t))
                env[binder] = t.payload
                env[c] = t.cont
                walk(body, ops)
            case P.Recv(c, binder, body):
                t = env.pop(c)
                ops.append(head(t))
                env[binder] = t.payload
                env[c] = t.cont
                walk(body, ops)
            case P.Link(_, _):
                pass
            case _:
                raise ValueError(
                    f"constraint mining cannot follow {type(q).__name__}")

    first: list = []
    sequences.append(first)
    walk(P.desugar(p), first)
    return [s for s in sequences if len(s) > 1]


def _pgv_sequences(subject) -> list:
    """Per-thread priority sequences of a straight-line configuration or
    term skeleton: channel creation, spawning, and the four channel
    operations, glued by let/sequence forms."""
    sequences: list = []
    env: dict = {}

    def head(s):
        return _prio_atom(s.prio)

    def walk_term(m, ops):
        match m:
            case Unit() | Var(_):
                return
            case LetPair(x, y, App(Const("new", ann), Unit()), body):
                if ann is None:
                    raise ValueError("skeleton channel lacks a type")
                env[x] = ann
                env[y] = S.dual(ann)
                walk_term(body, ops)
            case Seq(App(Const("spawn", _), LamUnit(child)), rest):
                own: list = []
                sequences.append(own)
                walk_term(child, own)
                walk_term(rest, ops)
            case Let(c2, App(Const("send", _), Pair(_, Var(c))), body):
                s = env.pop(c)
                ops.append(head(s))
                env[c2] = s.cont
                walk_term(body, ops)
            case LetPair(_, c2, App(Const("recv", _), Var(c)), body):
                s = env.pop(c)
                ops.append(head(s))
                env[c2] = s.cont
                walk_term(body, ops)
            case Seq(App(Const("close", _) | Const("wait", _), Var(c)), rest):
                ops.append(head(env.pop(c)))
                walk_term(rest, ops)
            case Seq(Var(_), rest) | Seq(Unit(), rest):
                walk_term(rest, ops)
            case _:
                raise ValueError(
                    f"constraint mining cannot follow {type(m).__name__}")

    def walk_config(c, ops):
        match c:
            case Thread(_, term):
                walk_term(term, ops)
            case Par(l, r):
                own: list = []
                sequences.append(own)
                walk_config(l, own)
                walk_config(r, ops)
            case Res(x, y, body, ann):
                if ann is None:
                    raise ValueError("skeleton restriction lacks a type")
                env[x] = ann
                env[y] = S.dual(ann)
                walk_config(body, ops)

    first: list = []
    sequences.append(first)
    if isinstance(subject, (Thread, Par, Res)):
        walk_config(subject, first)
    else:
        walk_term(subject, first)
    return [s for s in sequences if len(s) > 1]


def _fmt_constraint(a, b) -> str:
    return f"{a} < {b}"


def _constraint_cycle(constraints: list) -> Optional[frozenset]:
    """The shortest cycle in the must-come-before graph, as a witness
    set, or a directly false numeric constraint; None if consistent."""
    for a, b in constraints:
        if isinstance(a, int) and isinstance(b, int) and not a < b:
            return frozenset({_fmt_constraint(a, b)})
    adj: dict = {}
    for a, b in constraints:
        adj.setdefault(a, set()).add(b)
    best = None
    for start in adj:
        # breadth-first back to the start node
        parent = {start: None}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for nxt in adj.get(node, ()):
                if nxt == start:
                    path = [node]
                    while parent[path[-1]] is not None:
                        path.append(parent[path[-1]])
                    path.reverse()
                    path.append(start)
                    cycle = frozenset(
                        _fmt_constraint(u, v)
                        for u, v in zip(path, path[1:]))
                    if best is None or len(cycle) < len(best):
                        best = cycle
                    break
                if nxt not in parent:
                    parent[nxt] = node
                    queue.append(nxt)
    return best


# -- random well-typed configurations -----------------------------------------


@dataclass
class GenBudget:
    """Size knobs for the generators."""

    threads: tuple = (2, 4)
    channels: tuple = (1, 3)
    actions: tuple = (0, 3)
    choice_prob: float = 0.25
    decoration_prob: float = 0.35
    link_prob: float = 0.3          # process generator only
    unbound_prob: float = 0.3       # process generator only


def _schedule(rng: random.Random, nproc: int, nchan: int,
              budget: GenBudget):
    """Wire channels between process pairs and lay their events out in
    one ascending priority order.  Returns per-channel metadata and the
    global event list."""
    chans = []
    queues = {}
    for j in range(nchan):
        s, r = rng.sample(range(nproc), 2)
        plan = []
        for _ in range(rng.randint(*budget.actions)):
            if rng.random() < budget.choice_prob:
                plan.append("choice")
            else:
                plan.append("data")
        plan.append("term")
        chans.append({"ends": (s, r), "events": []})
        queues[j] = deque(plan)
    prio = 0
    while queues:
        j = rng.choice(sorted(queues))
        kind = queues[j].popleft()
        if not queues[j]:
            del queues[j]
        side = rng.randrange(2)          # which end acts
        label = rng.randrange(2)         # which branch, for choices
        chans[j]["events"].append((kind, side, prio, label))
        prio += 2
    return chans, prio


def gen_pgv_config(rng: random.Random,
                   budget: GenBudget = GenBudget()) -> S.Configuration:
    """A random closed well-typed configuration: several threads joined
    by unit-carrying sessions, every event on the one global priority
    order, the last thread being the main one."""
    nproc = rng.randint(*budget.threads)
    nchan = rng.randint(*budget.channels)
    chans, _ = _schedule(rng, nproc, nchan, budget)

    for j, ch in enumerate(chans):
        session = None
        for kind, side, prio, _ in reversed(ch["events"]):
            if kind == "term":
                session = S.EndS(prio) if side == 0 else S.EndR(prio)
            elif kind == "data":
                mk = S.Send if side == 0 else S.Recv
                session = mk(prio, S.UnitT(), session)
            else:
                mk = S.SelectS if side == 0 else S.OfferS
                session = mk(prio, (session, session))
        ch["session"] = session
        ch["names"] = (fresh("x"), fresh("y"))

    per_proc: list = [[] for _ in range(nproc)]
    for j, ch in enumerate(chans):
        for kind, side, prio, label in ch["events"]:
            actor = ch["ends"][side]
            other = ch["ends"][1 - side]
            if kind == "data":
                per_proc[actor].append((prio, "send", j, label))
                per_proc[other].append((prio, "recv", j, label))
            elif kind == "choice":
                per_proc[actor].append((prio, "select", j, label))
                per_proc[other].append((prio, "offer", j, label))
            else:
                per_proc[actor].append((prio, "close", j, label))
                per_proc[other].append((prio, "wait", j, label))
    for events in per_proc:
        events.sort()

    def decorate(rest: S.Term) -> S.Term:
        if rng.random() >= budget.decoration_prob:
            return rest
        u, v = fresh("u"), fresh("v")
        pick = rng.randrange(3)
        if pick == 0:
            return Seq(App(Lam(u, Var(u), S.UnitT()), Unit()), rest)
        if pick == 1:
            return LetPair(u, v, Pair(Unit(), Unit()),
                           Seq(Var(u), Seq(Var(v), rest)))
        return Seq(Unit(), rest)

    def emit(proc: int, events: list, names: dict, sess: dict) -> S.Term:
        if not events:
            return decorate(Unit())
        (prio, op, j, label), rest = events[0], events[1:]
        c = names[j]
        s = sess[j]
        if op == "send":
            c2 = fresh(c)
            names, sess = dict(names), dict(sess)
            names[j], sess[j] = c2, s.cont
            return Let(c2, App(Const("send"), Pair(Unit(), Var(c))),
                       emit(proc, rest, names, sess))
        if op == "recv":
            u, c2 = fresh("u"), fresh(c)
            names, sess = dict(names), dict(sess)
            names[j], sess[j] = c2, s.cont
            return LetPair(u, c2, App(Const("recv"), Var(c)),
                           Seq(Var(u), emit(proc, rest, names, sess)))
        if op == "select":
            picked = s.branches[label]
            c2 = fresh(c)
            names, sess = dict(names), dict(sess)
            names[j], sess[j] = c2, picked
            const = Const("select_inl" if label == 0 else "select_inr",
                          S.expand_session(picked))
            return Let(c2, App(const, Var(c)),
                       emit(proc, rest, names, sess))
        if op == "offer":
            branches = []
            binders = []
            for b in (0, 1):
                c2 = fresh(c)
                names_b, sess_b = dict(names), dict(sess)
                names_b[j], sess_b[j] = c2, s.branches[b]
                binders.append(c2)
                branches.append(emit(proc, rest, names_b, sess_b))
            return Offer(Var(c),
                         (binders[0], branches[0], binders[1], branches[1]))
        kind = "close" if op == "close" else "wait"
        names, sess = dict(names), dict(sess)
        del names[j], sess[j]
        return Seq(App(Const(kind), Var(c)),
                   emit(proc, rest, names, sess))

    threads = []
    for i, events in enumerate(per_proc):
        names = {j: ch["names"][0 if ch["ends"][0] == i else 1]
                 for j, ch in enumerate(chans) if i in ch["ends"]}
        sess = {}
        for j, ch in enumerate(chans):
            if i == ch["ends"][0]:
                sess[j] = ch["session"]
            elif i == ch["ends"][1]:
                sess[j] = S.dual(ch["session"])
        term = emit(i, events, names, sess)
        flag = Flag.MAIN if i == nproc - 1 else Flag.CHILD
        threads.append(Thread(flag, term))

    config: S.Configuration = threads[-1]
    for t in reversed(threads[:-1]):
        config = Par(t, config)
    for ch in reversed(chans):
        x, y = ch["names"]
        config = Res(x, y, config, S.expand_session(ch["session"]))
    return config


# -- random well-typed processes ----------------------------------------------


def gen_pcp_process(rng: random.Random,
                    budget: GenBudget = GenBudget()) -> P.Process:
    """A random closed well-typed process.  Data events ship fresh
    channels (bound or free-name sends), choices keep both branches on
    the same protocol, and an optional forwarder gadget exercises
    linking."""
    nproc = rng.randint(*budget.threads)
    nchan = rng.randint(*budget.channels)
    chans, prio = _schedule(rng, nproc, nchan, budget)

    # Payload channels: each data event creates one; its lone
    # close/wait is slotted after all base events (still one global
    # order, so per-process ascent is preserved).
    payloads = []
    top_restrictions = []  # (x name, y name, x type) for free-name sends
    for j, ch in enumerate(chans):
        s_end, r_end = ch["ends"]
        detailed = []
        for kind, side, p, label in ch["events"]:
            if kind != "data":
                detailed.append((kind, side, p, label, None))
                continue
            sender = ch["ends"][side]
            receiver = ch["ends"][1 - side]
            q = prio
            prio += 2
            unbound = rng.random() < budget.unbound_prob
            closer_is_keeper = rng.randrange(2) == 0
            pc = {
                "id": len(payloads), "prio": q, "unbound": unbound,
                "keeper": sender, "receiver": receiver,
                "closer_is_keeper": closer_is_keeper,
            }
            if unbound:
                pc["ship_name"] = fresh("a")
                pc["other_name"] = fresh("b")
                holder = rng.choice(
                    [i for i in range(nproc) if i != receiver])
                pc["other_holder"] = holder
            payloads.append(pc)
            detailed.append((kind, side, p, label, pc))
        ch["events"] = detailed

    def payload_component(pc) -> P.PcpType:
        # the type of the end the sender's continuation keeps
        q = pc["prio"]
        return P.CloseT(q) if pc["closer_is_keeper"] else P.WaitT(q)

    for ch in chans:
        t = None
        for kind, side, p, label, pc in reversed(ch["events"]):
            if kind == "term":
                t = P.CloseT(p) if side == 0 else P.WaitT(p)
            elif kind == "data":
                comp = payload_component(pc)
                if side == 0:
                    t = P.Out(p, comp, t)
                else:
                    t = P.In(p, pcp_dual(comp), t)
            else:
                mk = P.Choice if side == 0 else P.Branch
                t = mk(p, (t, t))
        ch["type"] = t
        ch["names"] = (fresh("x"), fresh("y"))

    per_proc: list = [[] for _ in range(nproc)]
    for j, ch in enumerate(chans):
        for kind, side, p, label, pc in ch["events"]:
            actor, other = ch["ends"][side], ch["ends"][1 - side]
            if kind == "data":
                per_proc[actor].append((p, "send", j, label, pc))
                per_proc[other].append((p, "recv", j, label, pc))
                q = pc["prio"]
                keep_closes = pc["closer_is_keeper"]
                if pc["unbound"]:
                    # the shipped end lands with the receiver; the
                    # other end was handed to a bystander up front
                    ship_op = "pwait" if keep_closes else "pclose"
                    oth_op = "pclose" if keep_closes else "pwait"
                    per_proc[other].append((q, ship_op, None, 0, pc))
                    per_proc[pc["other_holder"]].append(
                        (q, oth_op, None, 0, pc))
                else:
                    keep_op = "pclose" if keep_closes else "pwait"
                    recv_op = "pwait" if keep_closes else "pclose"
                    per_proc[actor].append((q, keep_op, None, 0, pc))
                    per_proc[other].append((q, recv_op, None, 0, pc))
            elif kind == "choice":
                per_proc[actor].append((p, "select", j, label, None))
                per_proc[other].append((p, "offer", j, label, None))
            else:
                per_proc[actor].append((p, "close", j, label, None))
                per_proc[other].append((p, "wait", j, label, None))
    for events in per_proc:
        events.sort(key=lambda e: e[0])

    for pc in payloads:
        if pc["unbound"]:
            ship_type = (P.WaitT(pc["prio"]) if pc["closer_is_keeper"]
                         else P.CloseT(pc["prio"]))
            top_restrictions.append(
                (pc["ship_name"], pc["other_name"], ship_type))

    def emit(proc: int, events: list, names: dict, pnames: dict) -> P.Process:
        if not events:
            return P.Halt()
        (p, op, j, label, pc), rest = events[0], events[1:]
        if op == "send":
            if pc["unbound"]:
                return P.SendFree(names[j], pc["ship_name"],
                                  emit(proc, rest, names, pnames))
            a = fresh("a")
            pnames = dict(pnames)
            pnames[pc["id"]] = a
            return P.Send(names[j], a, emit(proc, rest, names, pnames))
        if op == "recv":
            w = fresh("w")
            pnames = dict(pnames)
            pnames[pc["id"]] = w
            return P.Recv(names[j], w, emit(proc, rest, names, pnames))
        if op == "select":
            mk = P.SelectL if label == 0 else P.SelectR
            return mk(names[j], emit(proc, rest, names, pnames))
        if op == "offer":
            return P.Offer(names[j],
                           emit(proc, rest, names, pnames),
                           emit(proc, rest, names, pnames))
        if op in ("close", "wait"):
            mk = P.Close if op == "close" else P.Wait
            return mk(names[j], emit(proc, rest, names, pnames))
        # payload terminals
        if pc["unbound"]:
            name = (pnames[pc["id"]] if pc["id"] in pnames
                    else pc["other_name"])
        else:
            name = pnames[pc["id"]]
        mk = P.Close if op == "pclose" else P.Wait
        return mk(name, emit(proc, rest, names, pnames))

    procs = []
    for i, events in enumerate(per_proc):
        names = {j: ch["names"][0 if ch["ends"][0] == i else 1]
                 for j, ch in enumerate(chans) if i in ch["ends"]}
        procs.append(emit(i, events, names, {}))

    if rng.random() < budget.link_prob:
        kp = prio
        prio += 2
        a, b = fresh("a"), fresh("b")
        c, d = fresh("c"), fresh("d")
        procs.extend([P.Link(a, c),
                      P.Wait(b, P.Halt()),
                      P.Close(d, P.Halt())])
        top_restrictions.append((a, b, P.CloseT(kp)))
        top_restrictions.append((c, d, P.WaitT(kp)))

    body: P.Process = procs[-1]
    for q in reversed(procs[:-1]):
        body = P.Par(q, body)
    for x, y, t in reversed(top_restrictions):
        body = P.Res(x, y, body, t)
    for ch in reversed(chans):
        x, y = ch["names"]
        body = P.Res(x, y, body, ch["type"])
    return body


# -- the round-robin scheduler family -----------------------------------------


def _sched_prios(n: int):
    pa = [3 * i for i in range(n)]
    pb = [3 * i + 1 for i in range(n)]
    pc = [3 * i + 2 for i in range(n)]
    return pa, pb, pc, 3 * n


def pcp_scheduler(n: int) -> P.Process:
    """Milner's cyclic scheduler for `n` workers, token-passing over
    close/wait pairs.  Worker i starts (a), finishes (b), and passes the
    baton (c); one extra channel (d) lets the first worker observe the
    round completing."""
    if n < 2:
        raise ValueError("the scheduler needs at least two workers")
    pa, pb, pc, pd = _sched_prios(n)
    a = [(f"a{i + 1}", f"a{i + 1}'") for i in range(n)]
    b = [(f"b{i + 1}", f"b{i + 1}'") for i in range(n)]
    c = [(f"c{i + 1}", f"c{i + 1}'") for i in range(n)]
    d = ("d", "d'")

    def agent(i: int) -> P.Process:
        tail: P.Process = P.Halt()
        if i == 0:
            tail = P.Wait(c[n - 1][1], P.Close(d[0], P.Halt()))
        body = P.Close(a[i][0],
                       P.Wait(b[i][0],
                              P.Close(c[i][0], tail)))
        if i > 0:
            body = P.Wait(c[i - 1][1], body)
        return body

    def worker(i: int) -> P.Process:
        tail: P.Process = P.Halt()
        if i == 0:
            tail = P.Wait(d[1], P.Halt())
        return P.Wait(a[i][1], P.Close(b[i][1], tail))

    parts = [worker(0), agent(0)]
    for i in range(1, n):
        parts.extend([worker(i), agent(i)])
    body: P.Process = parts[-1]
    for q in reversed(parts[:-1]):
        body = P.Par(q, body)
    for i in reversed(range(n)):
        body = P.Res(c[i][0], c[i][1], body, P.CloseT(pc[i]))
        body = P.Res(b[i][0], b[i][1], body, P.WaitT(pb[i]))
        body = P.Res(a[i][0], a[i][1], body, P.CloseT(pa[i]))
    return P.Res(d[0], d[1], body, P.CloseT(pd))


def pgv_scheduler(n: int) -> S.Configuration:
    """The same scheduler written directly as a configuration of
    sequential child threads."""
    if n < 2:
        raise ValueError("the scheduler needs at least two workers")
    pa, pb, pc, pd = _sched_prios(n)
    a = [(f"a{i + 1}", f"a{i + 1}'") for i in range(n)]
    b = [(f"b{i + 1}", f"b{i + 1}'") for i in range(n)]
    c = [(f"c{i + 1}", f"c{i + 1}'") for i in range(n)]
    d = ("d", "d'")

    def act(kind: str, name: str, rest: S.Term) -> S.Term:
        return Seq(App(Const(kind), Var(name)), rest)

    def agent(i: int) -> S.Term:
        tail: S.Term = Unit()
        if i == 0:
            tail = act("wait", c[n - 1][1], act("close", d[0], Unit()))
        body = act("close", a[i][0],
                   act("wait", b[i][0],
                       act("close", c[i][0], tail)))
        if i > 0:
            body = act("wait", c[i - 1][1], body)
        return body

    def worker(i: int) -> S.Term:
        tail: S.Term = Unit()
        if i == 0:
            tail = act("wait", d[1], Unit())
        return act("wait", a[i][1], act("close", b[i][1], tail))

    parts = [worker(0), agent(0)]
    for i in range(1, n):
        parts.extend([worker(i), agent(i)])
    threads = [Thread(Flag.CHILD, t) for t in parts]
    config: S.Configuration = threads[-1]
    for t in reversed(threads[:-1]):
        config = Par(t, config)
    for i in reversed(range(n)):
        config = Res(c[i][0], c[i][1], config, S.EndS(pc[i]))
        config = Res(b[i][0], b[i][1], config, S.EndR(pb[i]))
        config = Res(a[i][0], a[i][1], config, S.EndS(pa[i]))
    return Res(d[0], d[1], config, S.EndS(pd))
