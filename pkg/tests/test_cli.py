import json

import numpy as np
import pytest

from axiom_verifier import PASS
from cli import (
    DumpFormatError,
    RunOptions,
    format_history_dump,
    format_matrix_dump,
    load_scenario,
    main,
    parse_history_dump,
    parse_matrix_dump,
    projector_checks,
    render_schedule,
    run_verify,
)
from conftest import SCENARIOS
from scenario_builders import HADAMARD, P0, P1, PAULI_X, desync_schedule


def test_verify_switch_passes(tmp_path, capsys):
    report = tmp_path / "switch-report.txt"
    assert main(["verify", str(SCENARIOS / "switch.json"), "--report", str(report)]) == 0
    text = report.read_text()
    for name in ("S.1", "S.2", "N.1", "N.2", "N.3", "U.1", "U.2", "U.3"):
        assert f"{name} " in text
    assert "overall: PASS" in capsys.readouterr().out


def test_verify_lugano_resync_attempt_fails(capsys):
    assert main(["verify", str(SCENARIOS / "lugano-resync-attempt.json"), "--samples", "3"]) == 1
    out = capsys.readouterr().out
    u3 = next(line for line in out.splitlines() if line.strip().startswith("U.3"))
    assert "FAIL" in u3


@pytest.mark.parametrize("name", ["lugano", "feynman", "twin"])
def test_verify_other_shipped_scenarios(name):
    assert main(["verify", str(SCENARIOS / f"{name}.json"), "--samples", "3"]) == 0


def test_verify_malformed_config_is_a_usage_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"kind": "switch", "agent_ops": ["pauli-q", "identity"]}')
    assert main(["verify", str(path)]) == 2
    assert "agent_ops.0" in capsys.readouterr().err
    assert main(["verify", str(tmp_path / "missing.json")]) == 2


def test_bad_flags_exit_with_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["verify"])
    assert exc.value.code == 2
    assert main(["verify", str(SCENARIOS / "switch.json"), "--samples", "0"]) == 2


def test_verify_is_deterministic():
    scenario = load_scenario(SCENARIOS / "switch.json")
    first = run_verify(scenario, RunOptions(samples=2)).render()
    assert run_verify(scenario, RunOptions(samples=2)).render() == first


def test_extract_switch_dumps(tmp_path):
    out = tmp_path / "switch"
    assert main(["extract", str(SCENARIOS / "switch.json"), "--out", str(out)]) == 0
    name, g = parse_matrix_dump((out / "process.txt").read_text())
    assert name == "process"
    expected = np.kron(P0, HADAMARD @ PAULI_X) + np.kron(P1, PAULI_X @ HADAMARD)
    np.testing.assert_allclose(g, expected, atol=1e-12)
    _, c = parse_matrix_dump((out / "choi.txt").read_text())
    vec = expected.reshape(-1, order="F")
    np.testing.assert_allclose(c, np.outer(vec, vec.conj()), atol=1e-12)
    header = (out / "process.txt").read_text().splitlines()[1]
    assert header.startswith("# chronoframe") and "config=" in header and "seed=11" in header


def test_extracted_histories_verify_identically(tmp_path):
    out = tmp_path / "switch"
    assert main(["extract", str(SCENARIOS / "switch.json"), "--out", str(out)]) == 0
    stored = json.loads((out / "custom-history.json").read_text())
    assert stored["kind"] == "custom-history"
    original = run_verify(load_scenario(SCENARIOS / "switch.json"), RunOptions(samples=2))
    reloaded = run_verify(load_scenario(out / "custom-history.json"), RunOptions(samples=2))
    for name in ("S.1", "S.2", "N.1", "N.2", "N.3", "U.1", "U.2", "projector", "constraint"):
        assert reloaded.get(name).status == original.get(name).status
    assert reloaded.passed
    assert main(["verify", str(out / "custom-history.json")]) == 0


def test_history_dump_round_trip(switch):
    histories = switch.construct_many(np.eye(switch.body_dim, dtype=complex))
    text = format_history_dump(histories, switch.ancillas.labels, "abc123", 5)
    assert text.startswith("chronoframe-history v1\n# chronoframe")
    dump = parse_history_dump(text)
    assert dump.ancillas == ("anc_A", "anc_B")
    assert len(dump.histories) == len(histories)
    for a, b in zip(dump.histories, histories):
        assert a.tuples == b.tuples
        for t in a.tuples:
            np.testing.assert_array_equal(a.branch(t), b.branch(t))


@pytest.mark.parametrize(
    ["text", "line"],
    (
        ("not a dump\n", 1),
        ("chronoframe-history v1\nlayout\n  clock c_A 3\nfinal_times 2\ninput 0\nt=(0): [1.0]\n", 6),
        ("chronoframe-history v1\nlayout\n  clock c_A 3\n  system s 1\nfinal_times 2\nbogus\n", 6),
        ("chronoframe-history v1\nlayout\n  clock c_A 3\n  system s 1\nt=(0): [1.0,0.0]\n", 5),
    ),
)
def test_history_dump_errors_carry_line_numbers(text, line):
    with pytest.raises(DumpFormatError) as exc:
        parse_history_dump(text, "dump.txt")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"dump.txt:{line}:")


def test_matrix_dump_round_trip(rng):
    m = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    name, back = parse_matrix_dump(format_matrix_dump("m", m))
    assert name == "m"
    np.testing.assert_array_equal(back, m)
    with pytest.raises(DumpFormatError):
        parse_matrix_dump("chronoframe-matrix v1\nshape 2 2\nrow: [1.0,0.0 0.0,0.0]\n")


def test_schedule_command(capsys):
    assert main(["schedule", "--agents", "2"]) == 0
    out = capsys.readouterr().out
    assert "T0=12" in out
    assert main(["schedule", "--agents", "3", "--perm", "0", "0", "1"]) == 2


def test_schedule_takes_the_permutation_of_comb_k(capsys):
    assert main(["schedule", "--config", str(SCENARIOS / "combs.json"), "--k", "1"]) == 0
    head = capsys.readouterr().out.splitlines()[0]
    assert head.startswith("k=1 agents=3 permutation=[2, 0, 1]")
    assert "T0=22" in head
    assert main(["schedule", "--agents", "2", "--perm", "1", "0", "--k", "4"]) == 0
    assert capsys.readouterr().out.startswith("k=4 agents=2 permutation=[1, 0]")


@pytest.mark.parametrize(
    "argv",
    (
        ["--config", "combs.json", "--k", "2"],
        ["--config", "switch.json"],
        ["--config", "combs.json", "--perm", "0", "1", "2"],
        ["--config", "combs.json", "--agents", "2"],
        [],
    ),
)
def test_schedule_rejects_inconsistent_arguments(argv, capsys):
    argv = [str(SCENARIOS / a) if a.endswith(".json") else a for a in argv]
    assert main(["schedule", *argv]) == 2
    assert capsys.readouterr().err.startswith("[error]")


def test_render_schedule_marks_freeze_windows():
    text = render_schedule(desync_schedule(3, [0, 1, 2]))
    rows = text.splitlines()
    assert rows[0].startswith("agents=3") and "T0=22" in rows[0]
    assert "*" not in rows[2]
    assert rows[3].count("*") == 2
    assert rows[4].count("*") == 4


def test_exponential_identity_uses_the_largest_final_time():
    scenario = load_scenario(SCENARIOS / "switch.json")
    results = {r.name: r for r in projector_checks(scenario, RunOptions())}
    assert results["exponential-identity"].status == PASS
    assert results["exponential-identity"].witness["T"] == max(scenario.builder.final_times)
