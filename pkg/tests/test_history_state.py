import numpy as np
import pytest

from history_state import (
    ClockOperator,
    ClockVector,
    HistoryState,
    condition,
    condition_all,
    evolution_matrices,
    evolution_matrix,
    history_inner,
)
from scenario_builders import P0, P1
from tensor_core import DimensionMismatchError, DimLayout, haar_unitary, random_state

BODY = DimLayout.from_pairs([("s", 2)])


def _state(branches):
    return HistoryState(("c_A", "c_B"), BODY, (2, 2), branches)


def test_history_state_validates_tuples():
    with pytest.raises(ValueError, match="exceeds final times"):
        _state({(3, 0): np.ones(2)})
    with pytest.raises(DimensionMismatchError):
        _state({(0, 0): np.ones(3)})


@pytest.mark.parametrize(
    ["branches", "message"],
    (
        ({(1, 1): np.ones(2), (2, 2): np.ones(2)}, r"no branch at \(0, 0\)"),
        ({(0, 0): np.ones(2), (1, 1): np.ones(2)}, r"no branch at \(2, 2\)"),
        ({(0, 0): np.ones(2), (1, 1): np.zeros(2), (2, 2): np.ones(2)}, "zero vector"),
    ),
)
def test_history_state_requires_boundary_branches(branches, message):
    with pytest.raises(ValueError, match=message):
        _state(branches)


def test_condition_drops_the_agent_clock():
    e0, e1 = np.eye(2, dtype=complex)
    hs = _state({(0, 0): e0, (1, 0): e1, (1, 1): e0, (2, 2): e1})
    v = condition(hs, 0, 1)
    assert v.clock_dims == (3,)
    assert v.tuples == [(0,), (1,)]
    np.testing.assert_allclose(v.block((0,)), e1)
    assert [len(s.blocks) for s in condition_all(hs, 0)] == [1, 2, 1]


def test_condition_rejects_out_of_range_reading():
    hs = _state({(0, 0): np.ones(2), (2, 2): np.ones(2)})
    with pytest.raises(ValueError):
        condition(hs, 1, 5)


def test_history_inner_and_linear_combination():
    e0, e1 = np.eye(2, dtype=complex)
    a = _state({(0, 0): e0, (1, 1): e1, (2, 2): e0})
    b = _state({(0, 0): e1, (1, 1): e1, (2, 2): e1})
    assert history_inner(a, b) == pytest.approx(1.0)
    c = HistoryState.linear_combination([1, -1], [a, b])
    assert set(c.branches) == {(0, 0), (2, 2)}
    assert history_inner(c, c) == pytest.approx(4.0)
    with pytest.raises(ValueError, match="no branch at"):
        HistoryState.linear_combination([1, -1], [a, a])


def test_clock_operator_is_identity_outside_window(rng):
    u = haar_unitary(4, rng)
    op = ClockOperator((3,), 2, ((0,), (1,)), u)
    v = ClockVector((3,), 2, {(0,): random_state(2, rng), (2,): random_state(2, rng)})
    out = op.apply(v)
    np.testing.assert_allclose(out.block((2,)), v.block((2,)))
    np.testing.assert_allclose(out.gather([(0,), (1,)]), u @ v.gather([(0,), (1,)]), atol=1e-12)
    np.testing.assert_allclose(op.block((2,), (2,)), np.eye(2))
    assert op.is_unitary()


def test_clock_operator_compose_matches_successive_apply(rng):
    a = ClockOperator((4,), 1, ((0,), (1,)), haar_unitary(2, rng))
    b = ClockOperator((4,), 1, ((1,), (3,)), haar_unitary(2, rng))
    v = ClockVector((4,), 1, {(t,): random_state(1, rng) for t in range(4)})
    assert a.compose(b).apply(v).distance(a.apply(b.apply(v))) < 1e-12


def test_construct_is_linear_in_the_input(switch, rng):
    psi, phi = random_state(4, rng), random_state(4, rng)
    combined = switch.construct(2 * psi - 1j * phi)
    expected = HistoryState.linear_combination([2, -1j], [switch.construct(psi), switch.construct(phi)])
    for t in expected.tuples:
        np.testing.assert_allclose(combined.branch(t), expected.branch(t), atol=1e-12)


def test_construct_accepts_non_unitary_operators(rng):
    from scenario_builders import build_switch

    a = rng.standard_normal((2, 2)) + 0j
    builder = build_switch(a, np.eye(2))
    assert len(builder.construct(np.eye(4)[0]).branches) > 0


def test_evolution_matrix_of_switch_final_tuple(switch):
    ua, ub = switch.default_ops
    m = evolution_matrix(switch, None, (7, 7))
    np.testing.assert_allclose(m, np.kron(P0, ub @ ua) + np.kron(P1, ua @ ub), atol=1e-12)
    assert set(evolution_matrices(switch, None)) >= {(0, 0), (3, 2), (2, 3), (7, 7)}


def test_resolve_ops_checks_shapes(switch):
    with pytest.raises(ValueError, match="expects 2"):
        switch.resolve_ops([np.eye(2)])
    with pytest.raises(DimensionMismatchError):
        switch.resolve_ops([np.eye(2), np.eye(3)])
