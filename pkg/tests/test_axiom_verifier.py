import numpy as np
import pytest

from axiom_verifier import (
    FAIL,
    PASS,
    SKIP,
    UnitaryExistenceError,
    affine_linearity_residual,
    check_affine_linearity,
    check_boundaries,
    check_candidate_unitaries,
    check_composition,
    check_normalization,
    check_time_of_action,
    check_unitary_evolution,
    extract_step_unitaries,
    full_report,
    matrices_from_trajectory,
    perspectival_states,
    relate_perspectives,
    slot_factor_distance,
)
from conftest import random_combs
from history_state import HistoryState, evolution_matrices
from normalization import NormalizationOperator
from scenario_builders import (
    HADAMARD,
    PAULI_X,
    TwinScenario,
    build_controlled_combs,
    build_custom_history,
    build_lugano_resync_attempt,
    build_switch,
    lugano_frame_gate,
)
from tensor_core import DimLayout, embed, haar_unitary

AXIOMS = ["S.1", "S.2", "N.1", "N.2", "N.3", "U.1", "U.2", "U.3", "affine-linearity"]


def _assert_all_pass(report):
    for name in AXIOMS:
        result = report.get(name)
        assert result.status == PASS, report.render()
    assert report.passed


def test_switch_satisfies_axioms(switch):
    _assert_all_pass(full_report(switch, samples=4, seed=3))


def test_twin_satisfies_axioms(twin):
    _assert_all_pass(full_report(twin, samples=4, seed=3))


def test_switch_with_ancillas_satisfies_axioms(rng):
    builder = build_switch(haar_unitary(4, rng), haar_unitary(4, rng), target_dim=2)
    assert builder.ancilla_dim == 4
    _assert_all_pass(full_report(builder, samples=3, seed=5))


@pytest.mark.parametrize(["n_agents", "n_combs"], [(2, 2), (2, 3), (3, 2), (3, 3)])
def test_combs_satisfy_axioms(rng, n_agents, n_combs):
    combs = random_combs(rng, n_agents, n_combs)
    builder = build_controlled_combs(combs, [haar_unitary(2, rng) for _ in range(n_agents)])
    report = full_report(builder, samples=3, seed=7)
    _assert_all_pass(report)
    assert report.get("declared-unitaries").status == PASS


def test_lugano_resync_attempt_holds_without_operations():
    one = np.eye(2, dtype=complex)
    builder = build_lugano_resync_attempt(one, one, one)
    report = full_report(builder, samples=4, seed=9)
    for name in ("S.1", "S.2", "N.1", "N.2", "N.3", "U.1", "U.2", "affine-linearity"):
        assert report.get(name).status == PASS, report.render()
    u3 = report.get("U.3")
    assert u3.status == FAIL
    assert u3.witness["time"] > builder.TIME_OF_ACTION


def test_lugano_resync_attempt_merge_depends_on_the_operation(rng):
    builder = build_lugano_resync_attempt(*(haar_unitary(2, rng) for _ in range(3)))
    report = full_report(builder, samples=4, seed=9)
    assert not report.passed
    u3 = report.get("U.3")
    assert u3.status == FAIL
    assert u3.witness["time"] > builder.TIME_OF_ACTION
    u1 = report.get("U.1")
    assert u1.status == FAIL
    assert u1.witness["time"] == builder.MERGE


def test_lugano_merge_normalization_covers_the_lagging_sectors():
    one = np.eye(2, dtype=complex)
    builder = build_lugano_resync_attempt(one, one, one)
    projectors = builder.projectors
    np.testing.assert_allclose(builder.lagging_sectors(0, builder.MERGE), projectors["B"] + projectors["C"])
    np.testing.assert_allclose(builder.lagging_sectors(2, 2), projectors["C"])
    assert builder.normalization(1, 5).is_identity()
    states = perspectival_states(builder, None, 0)
    for t in (2, builder.MERGE):
        assert all(v.norm() == pytest.approx(1.0, abs=1e-12) for v in states[t])


def test_lugano_resync_attempt_has_no_input_independent_step(rng):
    builder = build_lugano_resync_attempt(*(haar_unitary(2, rng) for _ in range(3)))
    with pytest.raises(UnitaryExistenceError) as exc:
        extract_step_unitaries(builder, None, 0)
    assert exc.value.time > builder.TIME_OF_ACTION


class FixedGateTwin(TwinScenario):
    """Applies a fixed gate where A's operation belongs; a valid history state, but not U.3."""

    def _stages(self, ops):
        fixed = self.embed_agent(HADAMARD, 0)
        vv = self.embed_system(self.v, ("S_A", "S_B"))
        ub = self.embed_agent(ops[1], 1)
        return [np.eye(self.body_dim, dtype=complex), fixed, vv @ fixed, ub @ vv @ fixed]


def test_time_of_action_rejects_a_fixed_gate_in_the_slot(rng):
    builder = FixedGateTwin(haar_unitary(2, rng), haar_unitary(2, rng), haar_unitary(4, rng))
    u1, _ = check_unitary_evolution(builder)
    assert u1.status == PASS
    result = check_time_of_action(builder, 0, samples=3, seed=1)
    assert result.status == FAIL
    assert result.witness["time"] == 2
    assert "rest" in result.message


def test_time_of_action_compares_the_slot_factor(twin):
    result = check_time_of_action(twin, 0, samples=3, seed=2)
    assert result.status == PASS
    assert result.witness["slot_factor_compared"] == 3


def test_slot_factor_distance_flags_a_different_unitary(rng):
    layout = DimLayout.from_pairs([("clocks", 2), ("s", 2)])
    before = np.kron(np.eye(2)[:, [0]], np.eye(2))
    u, w = haar_unitary(2, rng), haar_unitary(2, rng)
    after = embed(u, ["s"], layout) @ embed(PAULI_X, ["clocks"], layout) @ before
    assert slot_factor_distance(before, after, u, ["s"], layout) < 1e-10
    assert slot_factor_distance(before, after, w, ["s"], layout) > 1e-3
    cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    tangled = cnot @ np.column_stack([np.kron([1, 1], e) / np.sqrt(2) for e in np.eye(2)])
    assert slot_factor_distance(tangled, tangled, u, ["s"], layout) is None


def test_time_of_action_detects_wrong_declaration(twin):
    result = check_time_of_action(twin, 0, t_star=3, samples=3, seed=1)
    assert result.status == FAIL
    assert result.witness["time"] == 2


def test_time_of_action_passes_at_declared_time(twin):
    assert check_time_of_action(twin, 1, samples=3, seed=1).status == PASS


def test_declared_unitaries_reproduce_the_states(switch, twin):
    for builder in (switch, twin):
        for agent in range(2):
            assert check_candidate_unitaries(builder, None, agent).status == PASS


def test_composition_of_extracted_steps(switch):
    traj = extract_step_unitaries(switch, None, 1)
    assert check_composition(traj).status == PASS
    full = traj.propagator(traj.final_time, 0)
    for v, w in zip(traj.states[0], traj.states[-1]):
        assert full.apply(v).distance(w) < 1e-9


def test_relate_perspectives_matches_conditioning(twin):
    states = perspectival_states(twin, None, 0)
    for t in (0, 3, 6):
        for rebuilt, direct in zip(relate_perspectives(twin, None, 0, t), states[t]):
            assert rebuilt.distance(direct) < 1e-12


def test_matrices_from_trajectory_recover_evolution(switch):
    traj = extract_step_unitaries(switch, None, 0)
    found = matrices_from_trajectory(traj, switch)
    direct = evolution_matrices(switch, None)
    inputs = switch.physical_inputs()
    assert found
    for tup, m in found.items():
        expected = direct[tup] @ inputs if tup in direct else np.zeros_like(m)
        np.testing.assert_allclose(m, expected, atol=1e-9)


def test_affine_linearity_holds_in_every_slot(switch, combs_builder):
    for builder in (switch, combs_builder):
        for slot in range(builder.n_agents):
            assert check_affine_linearity(builder, None, slot, seed=4).status == PASS


def test_frame_gate_is_not_affine():
    one = np.eye(2, dtype=complex)
    residual = affine_linearity_residual(lugano_frame_gate, one, PAULI_X, one + PAULI_X)
    assert residual == pytest.approx(2.0)
    assert residual > 0.1


def _custom(branches, final_times=(3, 3), normalization=None):
    hs = HistoryState(("c_A", "c_B"), DimLayout.from_pairs([("s", 1)]), final_times, branches)
    return build_custom_history([hs], normalization)


ONE = np.ones(1, dtype=complex)


def test_boundaries_flag_an_early_start():
    builder = _custom({(0, 0): ONE, (1, 0): ONE, (2, 1): ONE, (2, 2): ONE, (3, 3): ONE})
    s1, s2 = check_boundaries(builder)
    assert s1.status == PASS
    assert s2.status == FAIL
    assert s2.witness["tuple"] == (1, 0)


def test_boundaries_flag_a_wrong_initial_branch():
    builder = _custom({(0, 0): 2 * ONE, (1, 1): 2 * ONE, (2, 2): 2 * ONE, (3, 3): 2 * ONE})
    s1, _ = check_boundaries(builder)
    assert s1.status == FAIL


def test_normalization_flags_boundary_rescaling():
    branches = {(t, t): ONE for t in range(4)}
    builder = _custom(branches, normalization={(0, 0): NormalizationOperator.uniform(0, 0, 0.5 * np.eye(1))})
    n1, n2, n3 = check_normalization(builder)
    assert (n1.status, n2.status, n3.status) == (PASS, PASS, FAIL)
    assert n3.witness == {"agent": "A", "time": 0}


def test_slotless_builder_skips_operation_checks():
    builder = _custom({(t, t): ONE for t in range(4)})
    report = full_report(builder, samples=2)
    assert report.get("U.3").status == SKIP
    assert report.get("affine-linearity").status == SKIP
    assert report.passed
