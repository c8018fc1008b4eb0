import numpy as np

from scenario_builders import HADAMARD, P0, P1, PAULI_X
from server import SCENARIO_DEFAULTS, desync_schedule, extract_process, scenario_kinds, verify_scenario


def test_verify_scenario_tool():
    result = verify_scenario({"kind": "switch", "ancilla_dims": [1, 1]}, samples=2)
    assert result["passed"] is True
    assert "overall: PASS" in result["report"]


def test_verify_scenario_reports_config_errors():
    result = verify_scenario({"kind": "wormhole"})
    assert result["error"].startswith("Invalid config: kind")
    assert "error" in verify_scenario({"kind": "custom-history", "history_file": "h.txt"})


def test_extract_process_tool():
    result = extract_process({"kind": "switch", "agent_ops": ["pauli-x", "hadamard"], "ancilla_dims": [1, 1]})
    assert result["shape"] == [4, 4]
    got = np.array([[re + 1j * im for re, im in row] for row in result["matrix"]])
    np.testing.assert_allclose(got, np.kron(P0, HADAMARD @ PAULI_X) + np.kron(P1, PAULI_X @ HADAMARD), atol=1e-12)


def test_desync_schedule_tool():
    result = desync_schedule(3)
    assert result["T0"] == 22 and result["T1"] == 29
    assert result["time_of_action"] == 24
    assert result["freeze_windows"] == [None, (2, 4), (8, 12)]
    assert "error" in desync_schedule(1)


def test_scenario_kinds_resource():
    assert set(scenario_kinds()) == set(SCENARIO_DEFAULTS)
