import json

import pytest

from bcp.cli import (
    EXIT_BUDGET,
    EXIT_COUNTEREXAMPLE,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_TIMEOUT,
    main,
    replay_file,
    split_counts,
)
from bcp.fileformat import format_protocol, parse_protocol
from bcp.machines import format_machine, parity_rtm, parse_machine, power_of_two_cm, rtm_run
from bcp.presburger import compile_formula, parse_formula

LT = "(< x y)"


@pytest.fixture
def lt_file(tmp_path):
    path = tmp_path / "lt.bcp"
    assert main(["compile", "--formula", LT, "-o", str(path)]) == EXIT_OK
    return path


def _csv_body(text):
    return [line for line in text.splitlines() if not line.startswith("# timestamp")]


# -- simulate ------------------------------------------------------------------------


def test_simulate_builtin_prints_seed_and_outcome(capsys):
    assert main(["simulate", "majority", "--input", "x=5,y=3", "--seed", "7"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "seed: 7" in out and "outcome: 1" in out


def test_simulate_without_seed_still_reports_one(capsys):
    assert main(["simulate", "majority", "--input", "x=2,y=3"]) == EXIT_OK
    assert "seed: " in capsys.readouterr().out


def test_simulate_same_seed_same_output(capsys, lt_file):
    main(["simulate", str(lt_file), "--input", "x=4,y=6", "--seed", "3"])
    a = capsys.readouterr().out
    main(["simulate", str(lt_file), "--input", "x=4,y=6", "--seed", "3"])
    assert capsys.readouterr().out == a


def test_simulate_timeout_code():
    assert main(["simulate", "majority", "--input", "x=400,y=399", "--seed", "1", "--max-steps", "5"]) == EXIT_TIMEOUT


def test_simulate_trace_file(tmp_path):
    t = tmp_path / "trace.txt"
    assert main(["simulate", "majority", "--input", "x=3,y=2", "--seed", "1", "--trace", str(t)]) == EXIT_OK
    assert t.read_text().strip()


def test_bad_input_reports_column(capsys):
    assert main(["simulate", "majority", "--input", "x=3,y"]) == EXIT_PARSE
    assert "column 5" in capsys.readouterr().err


def test_unparseable_protocol_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.bcp"
    bad.write_text("[states]\na b\n[transitions]\na -> z ;\n")
    assert main(["simulate", str(bad), "--input", "x=1"]) == EXIT_PARSE
    assert "line 4" in capsys.readouterr().err


def test_missing_file_is_parse_error():
    assert main(["simulate", "/nonexistent.bcp", "--input", "x=1"]) == EXIT_PARSE


# -- compile -------------------------------------------------------------------------


def test_compile_formula_round_trips(lt_file):
    text = lt_file.read_text()
    assert format_protocol(parse_protocol(text).protocol) == text
    want = [str(q) for q in compile_formula(parse_formula(LT)).states]
    assert [str(q) for q in parse_protocol(text).protocol.states] == want


def test_compile_formula_syntax_error(capsys):
    assert main(["compile", "--formula", "(< x"]) == EXIT_PARSE
    assert "position 4" in capsys.readouterr().err


def test_compile_needs_one_source():
    assert main(["compile"]) == EXIT_PARSE


def test_compile_rtm_chain(tmp_path):
    src = tmp_path / "parity.rtm"
    src.write_text(format_machine(parity_rtm()))
    out = tmp_path / "bin.rtm"
    assert main(["compile", "--rtm", str(src), "--emit", "binary", "-o", str(out)]) == EXIT_OK
    b = parse_machine(out.read_text())
    assert [rtm_run(b, [x], encoding="binary").result for x in range(6)] == [0, 1, 0, 1, 0, 1]
    cmf = tmp_path / "parity.cm"
    assert main(["compile", "--rtm", str(src), "--emit", "cm", "-o", str(cmf)]) == EXIT_OK
    assert cmf.read_text().startswith("[cm]")


def test_compile_cm_to_bcp_and_simulate(tmp_path, capsys):
    src = tmp_path / "pow.cm"
    src.write_text(format_machine(power_of_two_cm()))
    out = tmp_path / "pow.bcp"
    assert main(["compile", "--cm", str(src), "-k", "1", "--phases", "4", "-o", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "[generator] cm_to_bcp k=1 phases=4 arity=1" in text
    capsys.readouterr()
    assert main(["simulate", str(out), "--input", "x1=4", "--seed", "2"]) == EXIT_OK
    assert "outcome: 1" in capsys.readouterr().out


def test_compile_cm_rejects_other_targets(tmp_path):
    src = tmp_path / "pow.cm"
    src.write_text(format_machine(power_of_two_cm()))
    assert main(["compile", "--cm", str(src), "--emit", "sm"]) == EXIT_PARSE


# -- measure -------------------------------------------------------------------------


def test_measure_csv_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["measure", "majority", "--n", "10,20,40", "--trials", "10", "--seed", "5"]
    assert main(args + ["-o", str(a)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "seed: 5" in out and "fit:" in out
    assert main(args + ["-o", str(b)]) == EXIT_OK
    assert _csv_body(a.read_text()) == _csv_body(b.read_text())
    body = _csv_body(a.read_text())
    assert "# seed: 5" in body
    assert "n,trial,seed,steps,T,estimator,truncated" in body
    assert sum(1 for line in body if line and line[0].isdigit()) == 30


def test_measure_clock_reports_bound(capsys):
    assert main(["measure", "clock", "--n", "50", "--trials", "5", "--seed", "1"]) == EXIT_OK
    assert "2n ln n + 4" in capsys.readouterr().out


def test_split_counts_largest_remainder():
    assert split_counts(10, {"x": 1, "y": 1}) == {"x": 5, "y": 5}
    assert split_counts(10, {"x": 2, "y": 1}) == {"x": 7, "y": 3}
    assert sum(split_counts(7, {"a": 1, "b": 1, "c": 1}).values()) == 7


# -- check ---------------------------------------------------------------------------


def test_check_formula_protocol_correct(lt_file, capsys):
    assert main(["check", str(lt_file), "--inputs-up-to", "4"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out.strip())["verdict"] == "correct"


def _flip_accepting(text):
    lines = text.splitlines()
    i, j, k = lines.index("[states]"), lines.index("[globals]"), lines.index("[accepting]")
    states = [t for ln in lines[i + 1 : j] for t in ln.split()]
    acc = set(lines[k + 1].split())
    lines[k + 1] = " ".join(t for t in states if t not in acc)
    return "\n".join(lines) + "\n"


def test_check_mutated_protocol_gives_replayable_counterexample(lt_file, tmp_path, capsys):
    bad = tmp_path / "bad.bcp"
    bad.write_text(_flip_accepting(lt_file.read_text()))
    rp = tmp_path / "cex.json"
    code = main(["check", str(bad), "--inputs-up-to", "3", "--formula", LT, "--replay", str(rp)])
    assert code == EXIT_COUNTEREXAMPLE
    data = json.loads(rp.read_text())
    assert data["verdict"] == "counterexample"
    mutated = parse_protocol(bad.read_text()).protocol
    final = replay_file(mutated, data)
    assert {str(q): v for q, v in final.items()} == data["final"]


def test_check_expected_flag(capsys):
    assert main(["check", "majority", "--input", "x=2,y=1", "--expected", "1"]) == EXIT_OK
    assert main(["check", "majority", "--input", "x=2,y=1", "--expected", "0"]) == EXIT_COUNTEREXAMPLE


def test_check_needs_an_oracle():
    assert main(["check", "majority", "--input", "x=1"]) == EXIT_PARSE


def test_check_budget(lt_file):
    assert main(["check", str(lt_file), "--input", "x=3,y=3", "--budget", "2"]) == EXIT_BUDGET


def test_check_step_conformance(capsys):
    assert main(["check", "stepbp", "--conformance", "--n", "3"]) == EXIT_OK
    assert "verdict: correct" in capsys.readouterr().out
