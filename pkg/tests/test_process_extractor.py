import numpy as np
import pytest

from axiom_verifier import FAIL, PASS, SKIP
from process_extractor import (
    NonlinearChannelError,
    ProcessFunction,
    builder_process_function,
    causal_frame_decomposition_check,
    choi,
    comb_process_function,
    extract_process,
    lugano_process_function,
    process_distance,
    switch_process_function,
    trace_environment,
    twin_process_function,
    verify_pure_process,
)
from scenario_builders import build_controlled_combs, build_switch, fixed_order_comb
from tensor_core import DimLayout, haar_unitary, is_hermitian


def test_builder_process_matches_switch_formula(switch):
    assert process_distance(builder_process_function(switch), switch_process_function(), samples=8, seed=2) < 1e-10


def test_builder_process_matches_twin_formula(twin):
    p = twin_process_function(twin.v)
    assert process_distance(builder_process_function(twin), p, samples=8, seed=2) < 1e-10


def test_controlled_combs_in_switch_configuration_reproduce_the_switch(rng):
    combs = [fixed_order_comb([0, 1]), fixed_order_comb([1, 0])]
    builder = build_controlled_combs(combs, [haar_unitary(2, rng), haar_unitary(2, rng)])
    p = builder_process_function(builder)
    assert p.slot_dims == (2, 2)
    assert process_distance(p, switch_process_function(), samples=8, seed=4) < 1e-10
    assert process_distance(p, comb_process_function(combs), samples=4, seed=4) < 1e-10


def test_switch_differs_from_a_fixed_order():
    fixed = comb_process_function([fixed_order_comb([0, 1]), fixed_order_comb([0, 1])])
    assert process_distance(switch_process_function(), fixed, samples=8, seed=2) > 0.1


def test_identity_slots_give_identity_process(switch):
    np.testing.assert_allclose(extract_process(switch, [np.eye(2), np.eye(2)]), np.eye(4), atol=1e-12)


def test_lugano_process_is_pure():
    report = verify_pure_process(lugano_process_function(), samples=8, seed=5)
    assert report.passed
    assert [r.status for r in report.results] == [PASS, PASS, SKIP]


def test_switch_with_ancillas_is_ancilla_local():
    report = verify_pure_process(switch_process_function(2, (2, 3)), samples=3, seed=5)
    assert report.passed
    assert report.results[-1].status == PASS


def test_quadratic_process_fails_multilinearity():
    p = ProcessFunction(1, (2,), lambda ops: ops[0] @ ops[0], "square")
    report = verify_pure_process(p, samples=2, seed=1)
    assert {r.name: r.status for r in report.results}["multilinearity"] == FAIL


def test_non_unitary_process_fails_unitarity():
    p = ProcessFunction(1, (2,), lambda ops: 2 * ops[0], "scaled")
    assert {r.name: r.status for r in verify_pure_process(p, samples=2).results}["unitarity"] == FAIL


def test_process_function_checks_arity_and_shapes():
    p = switch_process_function()
    with pytest.raises(ValueError, match="takes 2"):
        p.eval([np.eye(2)])
    with pytest.raises(ValueError):
        p(np.eye(2), np.eye(3))


def test_choi_of_identity_is_maximally_entangled_projector():
    c = choi(lambda v: v, 3, 3)
    omega = np.eye(3).reshape(-1)
    np.testing.assert_allclose(c.matrix, np.outer(omega, omega), atol=1e-12)
    assert c.trace == pytest.approx(3)
    assert c.rank() == 1
    assert c.is_hermitian()


def test_choi_uses_column_stacking(rng):
    k = haar_unitary(2, rng)
    c = choi(lambda v: k @ v, 2, 2)
    vec = k.reshape(-1, order="F")
    np.testing.assert_allclose(c.matrix, np.outer(vec, vec.conj()), atol=1e-12)


def test_choi_rejects_nonlinear_channel():
    with pytest.raises(NonlinearChannelError):
        choi(lambda v: v * np.abs(v), 2, 2, seed=3)


def test_trace_environment_of_product_dilation(rng):
    u = haar_unitary(2, rng)
    layout = DimLayout.from_pairs([("s", 2), ("env", 2)])
    g = np.kron(u, haar_unitary(2, rng))
    c = trace_environment(g, layout, "env", np.array([1, 0], dtype=complex))
    vec = u.reshape(-1, order="F")
    np.testing.assert_allclose(c.matrix, np.outer(vec, vec.conj()), atol=1e-10)
    assert is_hermitian(c.matrix)


def test_trace_environment_of_swap_is_replacement_channel():
    swap = np.eye(4)[[0, 2, 1, 3]].astype(complex)
    layout = DimLayout.from_pairs([("s", 2), ("env", 2)])
    c = trace_environment(swap, layout, "env", np.array([1, 0], dtype=complex))
    # ρ ↦ Tr(ρ)|0⟩⟨0|: Choi matrix 1 ⊗ |0⟩⟨0|.
    np.testing.assert_allclose(c.matrix, np.kron(np.eye(2), np.diag([1, 0])), atol=1e-12)
    assert c.rank() == 2


@pytest.mark.parametrize("agent", [0, 1])
def test_causal_frame_decomposition(switch, twin, agent):
    for builder in (switch, twin):
        assert causal_frame_decomposition_check(builder, agent, samples=3, seed=1).status == PASS


def test_causal_frame_decomposition_fails_without_time_of_action(rng):
    from scenario_builders import build_lugano_resync_attempt

    builder = build_lugano_resync_attempt(*(haar_unitary(2, rng) for _ in range(3)))
    assert causal_frame_decomposition_check(builder, 0, samples=3, seed=1).status == FAIL


def test_builder_process_function_exposes_slots():
    builder = build_switch(np.eye(4), np.eye(2), target_dim=2)
    p = builder_process_function(builder)
    assert p.slot_dims == (4, 2)
    assert p.ancilla_dims == (2, 1)
    assert p.ancilla_labels == ("anc_A", "anc_B")
