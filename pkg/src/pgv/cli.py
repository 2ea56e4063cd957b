"""Command-line front end.

One executable, `pgv`, multiplexes every user-facing operation over the
library: `check`, `run`, `trace`, `translate`, `correspond`, `gen` and
`canon` work on `.pgv` sources (a bare term or a configuration), while the
`pcp` group mirrors `check`/`run`/`trace` for `.pcp` process files.

Exit status is uniform across commands: 0 on success, 1 when the input is
rejected (ill-typed source, a stuck or fuel-exhausted run, a failed
correspondence check), 2 on usage errors (unknown flags, unreadable or
unparsable files).  `--json` switches any command to a single structured
record on stdout.  All randomness sits behind an explicit `--seed`; the
default seed is 0 so repeated invocations are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import random
import sys

from . import syntax as S
from . import pcp as P
from .eval import (
    EvalError, MinPriorityFirst, SeededRandom, StuckNotNormal,
    congruence_normalize, explore, is_normal_form, is_terminated, run,
)
from .parse import ParseError, parse_program
from .pcp import (
    PcpParseError, PcpStuck, PcpTypeError, parse_process, pcp_enabled_steps,
    pcp_run, pcp_typecheck, process_str, process_to_soup, soup_to_process,
)
from .pretty import config_str, term_str, type_str
from .testkit import (
    GenBudget, fill_holes, find_annotations, gen_pcp_process, gen_pgv_config,
    priority_holes,
)
from .translate import (
    TranslateError, check_M_to_C, check_completeness, check_soundness,
    translate_config, translate_term,
)
from .typecheck import TypeCheckError, typecheck_config, typecheck_term

DEFAULT_SEED = 0

USAGE_ERROR = 2
REJECTED = 1


class _Usage(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise _Usage(f"cannot read {path}: {exc.strerror or exc}") from exc


def _load_pgv(path: str):
    try:
        return parse_program(_read(path))
    except ParseError as exc:
        raise _Usage(f"{path}: {exc}") from exc


def _load_pcp(path: str) -> P.Process:
    try:
        return parse_process(_read(path))
    except PcpParseError as exc:
        raise _Usage(f"{path}: {exc}") from exc


def _emit(args, record: dict, human: str) -> None:
    if args.json:
        print(json.dumps(record, indent=2))
    elif human:
        print(human)


def _fail(args, kind: str, message: str) -> int:
    if args.json:
        print(json.dumps({"ok": False,
                          "error": {"kind": kind, "message": message}},
                         indent=2))
    else:
        print(f"error[{kind}]: {message}", file=sys.stderr)
    return REJECTED


def _is_config(program) -> bool:
    return isinstance(program, (S.Thread, S.Par, S.Res))


def _as_config(program):
    if _is_config(program):
        return program
    return S.Thread(S.Flag.MAIN, program)


def _parse_policy(text: str):
    if text == "min-priority":
        return MinPriorityFirst(), None
    if text.startswith("random"):
        _, _, seed = text.partition(":")
        return SeededRandom(int(seed) if seed else DEFAULT_SEED), None
    if text.startswith("exhaustive"):
        _, _, depth = text.partition(":")
        return None, int(depth) if depth else 20
    raise _Usage(f"unknown policy {text!r} "
                 "(expected min-priority, random:SEED or exhaustive:DEPTH)")


# -- check / canon -------------------------------------------------------------------

def _cmd_check(args) -> int:
    program = _load_pgv(args.file)
    note = None
    if priority_holes(program):
        search = find_annotations(program, args.max_priority)
        if not search.found:
            constraints = ", ".join(sorted(search.witness))
            return _fail(args, "priority-violation",
                         "no priority assignment with values <= "
                         f"{args.max_priority} satisfies the constraints; "
                         f"conflicting requirements: {constraints}")
        program = fill_holes(program, search.assignment)
        note = "annotations: " + ", ".join(
            f"?{name} = {value}"
            for name, value in search.assignment.items())
    try:
        if _is_config(program):
            result = typecheck_config(program)
            flag = "main" if result.flag is S.Flag.MAIN else "child"
            record = {"ok": True, "flag": flag}
            human = f"flag: {flag}"
        else:
            result = typecheck_term(program)
            record = {"ok": True, "type": type_str(result.type),
                      "bound": repr(result.bound)}
            human = f"type: {type_str(result.type)}, bound: {result.bound!r}"
    except TypeCheckError as exc:
        return _fail(args, exc.kind, exc.message)
    if note:
        record["annotations"] = note.removeprefix("annotations: ")
        human = note + "\n" + human
    if args.explain:
        human += "\n" + result.derivation.render()
        record["derivation"] = result.derivation.render()
    _emit(args, record, human)
    return 0


def _cmd_canon(args) -> int:
    program = _load_pgv(args.file)
    if _is_config(program):
        text = config_str(congruence_normalize(program))
    else:
        text = term_str(program)
    _emit(args, {"ok": True, "canonical": text}, text)
    return 0


# -- run / trace ---------------------------------------------------------------------

def _trace_record(initial, result) -> dict:
    return {"initial": config_str(initial),
            "steps": [{"rule": st.label, "focus": list(st.threads),
                       "names": list(st.names), "config": st.config}
                      for st in result.trace]}


def _run_exhaustive(args, config, depth: int) -> int:
    try:
        typecheck_config(config)
        states, edges, terminals = explore(config, depth=depth)
    except (TypeCheckError, EvalError) as exc:
        return _fail(args, getattr(exc, "kind", "exploration"), str(exc))
    bad = [k for k in terminals
           if not (is_terminated(states[k]) or is_normal_form(states[k]))]
    record = {"ok": not bad, "states": len(states), "edges": len(edges),
              "terminals": len(terminals),
              "stuck": [config_str(states[k]) for k in sorted(bad)]}
    human = (f"states: {len(states)}, edges: {len(edges)}, "
             f"terminals: {len(terminals)}")
    if bad:
        human += "\nstuck non-normal terminals:\n" + "\n".join(
            "  " + config_str(states[k]) for k in sorted(bad))
        _emit(args, record, human)
        return REJECTED
    _emit(args, record, human)
    return 0


def _cmd_run(args, with_steps: bool = False) -> int:
    program = _load_pgv(args.file)
    config = _as_config(program)
    policy, depth = _parse_policy(args.policy)
    if policy is None:
        return _run_exhaustive(args, config, depth)
    try:
        typecheck_config(config)
        result = run(config, policy, fuel=args.fuel)
    except TypeCheckError as exc:
        return _fail(args, exc.kind, exc.message)
    except StuckNotNormal as exc:
        return _fail(args, "stuck", str(exc))
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            json.dump(_trace_record(config, result), fh, indent=2)
            fh.write("\n")
    record = {"ok": result.outcome != "fuel-exhausted",
              "outcome": result.outcome, "steps": result.steps,
              "rules": result.rules_used}
    lines = []
    if with_steps:
        trace = _trace_record(config, result)
        record["initial"] = trace["initial"]
        record["trace"] = trace["steps"]
        for n, st in enumerate(result.trace, start=1):
            names = ", ".join(st.names)
            lines.append(f"step {n}: {st.label}" + (f" ({names})" if names
                                                    else ""))
    if result.outcome == "terminated":
        record["value"] = term_str(result.value)
        lines.append(f"value: {term_str(result.value)}")
    elif result.outcome == "normal-form":
        record["config"] = config_str(result.config)
        lines.append(f"normal form: {config_str(result.config)}")
    else:
        lines.append(f"fuel exhausted after {result.steps} steps")
    _emit(args, record, "\n".join(lines))
    return 0 if record["ok"] else REJECTED


def _cmd_trace(args) -> int:
    return _cmd_run(args, with_steps=True)


# -- translate / correspond ----------------------------------------------------------

def _cmd_translate(args) -> int:
    process = _load_pcp(args.file)
    try:
        pcp_typecheck(process)
        S.reset_fresh()
        image = translate_config(process)
        term_image = None
        if args.term:
            S.reset_fresh()
            term_image = term_str(translate_term(process))
    except (PcpTypeError, TranslateError) as exc:
        return _fail(args, getattr(exc, "kind", "translate"), str(exc))
    text = config_str(image)
    record = {"ok": True, "config": text, "term": term_image}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        human = f"wrote {args.out}"
        if term_image:
            human += f"\nterm image: {term_image}"
    else:
        human = text
        if term_image:
            human += f"\n-- term image:\n{term_image}"
    _emit(args, record, human)
    return 0


def _cmd_correspond(args) -> int:
    process = _load_pcp(args.file)
    try:
        pcp_typecheck(process)
    except PcpTypeError as exc:
        return _fail(args, exc.kind, str(exc))
    S.reset_fresh()
    checks = {}
    try:
        result = typecheck_term(translate_term(process))
        ok = type_str(result.type) == "1"
        checks["preservation-term"] = (ok, f"type {type_str(result.type)}")
        flag = typecheck_config(translate_config(process)).flag
        checks["preservation-config"] = (flag is S.Flag.CHILD,
                                         f"flag {flag.value}")
        for name, check in (("m-to-c", check_M_to_C),
                            ("soundness", check_soundness),
                            ("completeness", check_completeness)):
            if name == "m-to-c":
                verdict = check(process)
            else:
                verdict = check(process, depth=args.depth)
            checks[name] = (verdict.ok,
                            f"{verdict.detail} ({verdict.checked} checked)")
    except (TypeCheckError, TranslateError, EvalError,
            StuckNotNormal) as exc:
        return _fail(args, "correspondence", str(exc))
    overall = all(ok for ok, _ in checks.values())
    record = {"ok": overall, "file": args.file, "depth": args.depth,
              "checks": {name: {"ok": ok, "detail": detail}
                         for name, (ok, detail) in checks.items()}}
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    human = "\n".join(f"{name}: {'ok' if ok else 'FAIL'} - {detail}"
                      for name, (ok, detail) in checks.items())
    _emit(args, record, human)
    return 0 if overall else REJECTED


# -- gen -----------------------------------------------------------------------------

_BUDGET_RANGES = {"threads", "channels", "actions"}
_BUDGET_PROBS = {"choice": "choice_prob", "decorate": "decoration_prob",
                 "link": "link_prob", "unbound": "unbound_prob"}


def _parse_budget(text: str) -> GenBudget:
    """`threads=2:4,channels=1:3,actions=0:3,choice=0.25,...`"""
    fields = {}
    if text:
        for part in text.split(","):
            key, eq, value = part.partition("=")
            if not eq:
                raise _Usage(f"budget entry {part!r} is not key=value")
            key = key.strip()
            if key in _BUDGET_RANGES:
                lo, colon, hi = value.partition(":")
                try:
                    fields[key] = (int(lo), int(hi) if colon else int(lo))
                except ValueError as exc:
                    raise _Usage(f"bad range {value!r} for {key}") from exc
            elif key in _BUDGET_PROBS:
                try:
                    fields[_BUDGET_PROBS[key]] = float(value)
                except ValueError as exc:
                    raise _Usage(f"bad probability {value!r} for {key}") \
                        from exc
            else:
                raise _Usage(f"unknown budget key {key!r}")
    return GenBudget(**fields)


def _cmd_gen(args) -> int:
    budget = _parse_budget(args.budget)
    rng = random.Random(args.seed)
    S.reset_fresh()
    if args.pcp:
        process = gen_pcp_process(rng, budget)
        pcp_typecheck(process)
        text = process_str(process)
    else:
        config = gen_pgv_config(rng, budget)
        typecheck_config(config)
        text = config_str(config)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        human = f"wrote {args.out}"
    else:
        human = text
    _emit(args, {"ok": True, "seed": args.seed, "source": text}, human)
    return 0


# -- pcp group -----------------------------------------------------------------------

def _cmd_pcp_check(args) -> int:
    process = _load_pcp(args.file)
    try:
        pcp_typecheck(process)
    except PcpTypeError as exc:
        return _fail(args, exc.kind, str(exc))
    _emit(args, {"ok": True}, "ok")
    return 0


def _cmd_pcp_run(args, with_steps: bool = False) -> int:
    process = _load_pcp(args.file)
    try:
        pcp_typecheck(process)
    except PcpTypeError as exc:
        return _fail(args, exc.kind, str(exc))
    rng = random.Random(args.seed) if args.seed is not None else None
    snapshots = []
    try:
        if with_steps:
            soup = process_to_soup(process)
            trace = []
            for _ in range(args.fuel):
                steps = pcp_enabled_steps(soup)
                if not steps:
                    break
                chosen = rng.choice(steps) if rng else steps[0]
                soup = chosen.apply()
                trace.append((chosen.label, chosen.names))
                snapshots.append(process_str(soup_to_process(soup)))
            result = pcp_run(process, fuel=args.fuel,
                             rng=random.Random(args.seed)
                             if args.seed is not None else None)
        else:
            result = pcp_run(process, fuel=args.fuel, rng=rng)
    except PcpStuck as exc:
        return _fail(args, "stuck", str(exc))
    record = {"ok": result.outcome == "halt", "outcome": result.outcome,
              "steps": result.steps,
              "rules": [label for label, _ in result.trace]}
    lines = []
    if with_steps:
        record["trace"] = [{"rule": label, "names": list(names),
                            "config": snap}
                           for (label, names), snap in zip(result.trace,
                                                           snapshots)]
        for n, (label, names) in enumerate(result.trace, start=1):
            shown = ", ".join(names)
            lines.append(f"step {n}: {label}" + (f" ({shown})" if shown
                                                 else ""))
    if result.outcome == "halt":
        lines.append(f"halt ({result.steps} steps)")
    else:
        lines.append(f"fuel exhausted after {result.steps} steps")
    _emit(args, record, "\n".join(lines))
    return 0 if record["ok"] else REJECTED


def _cmd_pcp_trace(args) -> int:
    return _cmd_pcp_run(args, with_steps=True)


# -- argument plumbing ---------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="pgv",
        description="Type-check, run and translate priority-typed programs.")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--json", action="store_true",
                       help="emit one structured JSON record on stdout")

    p = sub.add_parser("check", help="type-check a .pgv term or configuration")
    p.add_argument("file")
    p.add_argument("--explain", action="store_true",
                   help="print the full typing derivation")
    p.add_argument("--max-priority", type=int, default=4, metavar="K",
                   help="search bound for priority holes (default 4)")
    common(p)
    p.set_defaults(fn=_cmd_check)

    for name, fn in (("run", _cmd_run), ("trace", _cmd_trace)):
        p = sub.add_parser(name, help=f"{name} a .pgv program")
        p.add_argument("file")
        p.add_argument("--policy", default="min-priority",
                       help="min-priority | random:SEED | exhaustive:DEPTH "
                            "(default min-priority; random seed defaults "
                            f"to {DEFAULT_SEED})")
        p.add_argument("--fuel", type=int, default=10_000)
        p.add_argument("--trace", metavar="OUT.json",
                       help="write the step trace as JSON")
        common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("translate",
                       help="translate a .pcp process to a .pgv configuration")
    p.add_argument("file")
    p.add_argument("-o", "--out", metavar="FILE.pgv")
    p.add_argument("--term", action="store_true",
                   help="also print the term-level image")
    common(p)
    p.set_defaults(fn=_cmd_translate)

    p = sub.add_parser("correspond",
                       help="check the translation invariants for a .pcp file")
    p.add_argument("file")
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--report", metavar="OUT.json")
    common(p)
    p.set_defaults(fn=_cmd_correspond)

    p = sub.add_parser("gen", help="emit a generated program (debugging aid)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--budget", default="",
                   help="threads=LO:HI,channels=LO:HI,actions=LO:HI,"
                        "choice=P,decorate=P,link=P,unbound=P")
    p.add_argument("--pcp", action="store_true",
                   help="emit a process instead of a configuration")
    p.add_argument("-o", "--out", metavar="FILE")
    common(p)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("canon", help="print the congruence-normal form")
    p.add_argument("file")
    common(p)
    p.set_defaults(fn=_cmd_canon)

    pcp = sub.add_parser("pcp", help="process-calculus commands")
    pcp_sub = pcp.add_subparsers(dest="pcp_command", required=True)

    p = pcp_sub.add_parser("check", help="type-check a .pcp process")
    p.add_argument("file")
    common(p)
    p.set_defaults(fn=_cmd_pcp_check)

    for name, fn in (("run", _cmd_pcp_run), ("trace", _cmd_pcp_trace)):
        p = pcp_sub.add_parser(name, help=f"{name} a .pcp process")
        p.add_argument("file")
        p.add_argument("--fuel", type=int, default=10_000)
        p.add_argument("--seed", type=int, default=None,
                       help="randomise step choice (default: first enabled)")
        common(p)
        p.set_defaults(fn=fn)

    return top


def main(argv=None) -> int:
    S.reset_fresh()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
