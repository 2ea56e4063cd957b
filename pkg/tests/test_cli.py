"""The `pgv` executable, driven in-process: exit codes, human and JSON
output shapes, and byte-for-byte stability of seeded commands."""

import json

import pytest

from pgv.cli import main
from pgv.parse import parse_program
from pgv.pcp import parse_process, pcp_typecheck
from pgv.typecheck import typecheck_config

from helpers import CORPUS

ACYCLIC_HOLES = """\
let (x, x') = new [!?o 1 . end!?p] () in
let (u, u') = new [!?o' 1 . end!?q] () in
spawn (\\(). let x1 = send ((), x) in
            let (v, u1) = recv u' in v; close x1; wait u1; ());
let (v', x1') = recv x' in v';
let u1' = send ((), u) in
wait x1'; close u1'; ()
"""


def cli(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:  # argparse handles --help / bad flags itself
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def path(name: str) -> str:
    return str(CORPUS / name)


# -- check ---------------------------------------------------------------------------

def test_check_reports_type_and_bound(capsys):
    code, out, _ = cli(capsys, "check", path("cycle.pgv"))
    assert code == 0
    assert out.strip() == "type: 1, bound: 3"


def test_check_reports_the_flag_of_a_configuration(capsys):
    code, out, _ = cli(capsys, "check", path("sched3.pgv"))
    assert code == 0
    assert out.strip() == "flag: child"


def test_check_json_record(capsys):
    code, out, _ = cli(capsys, "check", path("cycle.pgv"), "--json")
    assert code == 0
    record = json.loads(out)
    assert record == {"ok": True, "type": "1", "bound": "3"}


def test_check_solves_priority_holes(capsys, tmp_path):
    src = tmp_path / "holes.pgv"
    src.write_text(ACYCLIC_HOLES, encoding="utf-8")
    code, out, _ = cli(capsys, "check", str(src))
    assert code == 0
    first, second = out.splitlines()
    assert first == "annotations: ?o = 0, ?p = 2, ?o' = 1, ?q = 3"
    assert second == "type: 1, bound: 3"


def test_check_rejects_an_unsatisfiable_skeleton(capsys):
    code, out, err = cli(capsys, "check", path("deadlock.pgv"))
    assert code == 1
    assert out == ""
    assert err.startswith("error[priority-violation]:")
    assert "o < o', o' < o" in err


def test_check_rejection_as_json(capsys):
    code, out, _ = cli(capsys, "check", path("deadlock.pgv"), "--json")
    assert code == 1
    record = json.loads(out)
    assert record["ok"] is False
    assert record["error"]["kind"] == "priority-violation"


def test_check_explain_appends_the_derivation(capsys):
    code, out, _ = cli(capsys, "check", path("cycle.pgv"), "--explain")
    assert code == 0
    assert out.splitlines()[0] == "type: 1, bound: 3"
    assert len(out.splitlines()) > 5


# -- run / trace ---------------------------------------------------------------------

def test_run_to_a_value(capsys):
    code, out, _ = cli(capsys, "run", path("cycle.pgv"))
    assert code == 0
    assert out.strip() == "value: ()"


def test_run_to_a_normal_form(capsys):
    code, out, _ = cli(capsys, "run", path("echo.pgv"))
    assert code == 0
    assert out.startswith("normal form: ")


def test_run_rejects_an_ill_typed_program(capsys):
    code, _, err = cli(capsys, "run", path("deadlock.pgv"))
    assert code == 1
    assert err.startswith("error[")


def test_run_reports_fuel_exhaustion(capsys):
    code, out, _ = cli(capsys, "run", path("cycle.pgv"), "--fuel", "3")
    assert code == 1
    assert out.strip() == "fuel exhausted after 3 steps"


def test_run_random_policy_is_seeded(capsys):
    outs = set()
    for _ in range(2):
        code, out, _ = cli(capsys, "run", path("cycle.pgv"),
                           "--policy", "random:7", "--json")
        assert code == 0
        outs.add(out)
    assert len(outs) == 1
    assert json.loads(outs.pop())["value"] == "()"


def test_run_exhaustive_policy_reports_the_state_space(capsys):
    code, out, _ = cli(capsys, "run", path("cycle.pgv"),
                       "--policy", "exhaustive:40")
    assert code == 0
    assert out.startswith("states: ")
    assert "terminals: " in out


def test_run_unknown_policy_is_a_usage_error(capsys):
    code, _, err = cli(capsys, "run", path("cycle.pgv"),
                       "--policy", "bogus")
    assert code == 2
    assert err.startswith("usage error:")


def test_run_writes_a_trace_file(capsys, tmp_path):
    out_file = tmp_path / "trace.json"
    code, _, _ = cli(capsys, "run", path("cycle.pgv"),
                     "--trace", str(out_file))
    assert code == 0
    record = json.loads(out_file.read_text(encoding="utf-8"))
    assert set(record) == {"initial", "steps"}
    assert record["steps"], "expected at least one step"
    assert set(record["steps"][0]) == {"rule", "focus", "names", "config"}


def test_trace_prints_one_line_per_step(capsys):
    code, out, _ = cli(capsys, "trace", path("cycle.pgv"))
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("step 1: ")
    assert lines[-1] == "value: ()"
    assert len(lines) - 1 == sum(1 for l in lines if l.startswith("step "))


def test_trace_json_keeps_the_step_count_and_the_steps(capsys):
    code, out, _ = cli(capsys, "trace", path("cycle.pgv"), "--json")
    assert code == 0
    record = json.loads(out)
    assert isinstance(record["steps"], int)
    assert len(record["trace"]) == record["steps"]
    assert record["initial"].startswith("main ")


# -- canon ---------------------------------------------------------------------------

def test_canon_prints_a_canonical_configuration(capsys):
    code, out, _ = cli(capsys, "canon", path("sched3.pgv"))
    assert code == 0
    assert out.startswith("(nu ")
    # stable: canonicalising the canonical form changes nothing
    code2, out2, _ = cli(capsys, "canon", path("sched3.pgv"))
    assert (code2, out2) == (code, out)


def test_canon_passes_a_bare_term_through(capsys):
    code, out, _ = cli(capsys, "canon", path("echo.pgv"))
    assert code == 0
    assert out.startswith("let ")


# -- translate / correspond ------------------------------------------------------------

def test_translate_emits_a_checkable_configuration(capsys):
    code, out, _ = cli(capsys, "translate", path("close-wait.pcp"))
    assert code == 0
    image = parse_program(out.strip())
    assert typecheck_config(image).flag.value == "child"


def test_translate_term_appendix(capsys):
    code, out, _ = cli(capsys, "translate", path("close-wait.pcp"), "--term")
    assert code == 0
    assert "-- term image:" in out


def test_translate_writes_a_file(capsys, tmp_path):
    out_file = tmp_path / "image.pgv"
    code, out, _ = cli(capsys, "translate", path("choice.pcp"),
                       "-o", str(out_file))
    assert code == 0
    assert out.startswith("wrote ")
    image = parse_program(out_file.read_text(encoding="utf-8"))
    typecheck_config(image)


def test_correspond_runs_all_five_checks(capsys):
    code, out, _ = cli(capsys, "correspond", path("close-wait.pcp"),
                       "--depth", "10")
    assert code == 0
    lines = out.splitlines()
    names = [line.split(":")[0] for line in lines]
    assert names == ["preservation-term", "preservation-config",
                     "m-to-c", "soundness", "completeness"]
    assert all(": ok - " in line for line in lines)


def test_correspond_writes_a_report(capsys, tmp_path):
    report = tmp_path / "report.json"
    code, _, _ = cli(capsys, "correspond", path("link.pcp"),
                     "--report", str(report))
    assert code == 0
    record = json.loads(report.read_text(encoding="utf-8"))
    assert record["ok"] is True
    assert set(record["checks"]) == {"preservation-term",
                                     "preservation-config",
                                     "m-to-c", "soundness", "completeness"}


# -- gen -----------------------------------------------------------------------------

def test_gen_is_stable_per_seed(capsys):
    first = cli(capsys, "gen", "--seed", "5")
    second = cli(capsys, "gen", "--seed", "5")
    assert first == second
    assert first[0] == 0
    parse_program(first[1].strip())


def test_gen_pcp_emits_a_well_typed_process(capsys):
    code, out, _ = cli(capsys, "gen", "--pcp", "--seed", "3")
    assert code == 0
    pcp_typecheck(parse_process(out.strip()))


def test_gen_accepts_a_budget(capsys):
    code, out, _ = cli(capsys, "gen", "--seed", "1",
                       "--budget", "threads=3:3,channels=1:1,choice=0.0")
    assert code == 0
    parse_program(out.strip())


def test_gen_rejects_a_malformed_budget(capsys):
    code, _, err = cli(capsys, "gen", "--budget", "threads=lots")
    assert code == 2
    assert err.startswith("usage error:")


# -- the pcp group -------------------------------------------------------------------

def test_pcp_check_accepts_the_corpus(capsys):
    code, out, _ = cli(capsys, "pcp", "check", path("bound-send.pcp"))
    assert code == 0
    assert out.strip() == "ok"


def test_pcp_check_rejects_an_ill_typed_process(capsys, tmp_path):
    bad = tmp_path / "bad.pcp"
    bad.write_text("(nu x y : 1[0]) x[]. halt | halt\n", encoding="utf-8")
    code, _, err = cli(capsys, "pcp", "check", str(bad))
    assert code == 1
    assert err.startswith("error[linearity]:")


def test_pcp_run_halts(capsys):
    code, out, _ = cli(capsys, "pcp", "run", path("close-wait.pcp"))
    assert code == 0
    assert out.strip() == "halt (1 steps)"


def test_pcp_run_fuel_exhaustion(capsys):
    code, out, _ = cli(capsys, "pcp", "run", path("sched3.pcp"),
                       "--fuel", "2")
    assert code == 1
    assert out.strip() == "fuel exhausted after 2 steps"


def test_pcp_trace_lists_the_synchronisations(capsys):
    code, out, _ = cli(capsys, "pcp", "trace", path("choice.pcp"))
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("step 1: E-Select-Inr")
    assert lines[-1] == "halt (2 steps)"


def test_pcp_trace_json(capsys):
    code, out, _ = cli(capsys, "pcp", "trace", path("link.pcp"), "--json")
    assert code == 0
    record = json.loads(out)
    assert record["ok"] is True
    assert [st["rule"] for st in record["trace"]] == ["E-Link", "E-Close"]
    assert all(set(st) == {"rule", "names", "config"}
               for st in record["trace"])


def test_pcp_run_seeded_choice_is_reproducible(capsys):
    runs = {cli(capsys, "pcp", "run", path("sched3.pcp"),
                "--seed", "9", "--json")
            for _ in range(2)}
    assert len(runs) == 1


# -- plumbing ------------------------------------------------------------------------

def test_missing_file_is_a_usage_error(capsys):
    code, _, err = cli(capsys, "check", "no-such-file.pgv")
    assert code == 2
    assert err.startswith("usage error:")


def test_unparsable_source_is_a_usage_error(capsys, tmp_path):
    bad = tmp_path / "bad.pgv"
    bad.write_text("let let let\n", encoding="utf-8")
    code, _, err = cli(capsys, "check", str(bad))
    assert code == 2
    assert err.startswith("usage error:")


def test_no_arguments_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "check" in capsys.readouterr().out
