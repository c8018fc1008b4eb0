import numpy as np
import pytest

from history_state import ClockVector, perspectival_state
from normalization import NormalizationOperator, two_speed_example, validate
from tensor_core import DimensionMismatchError, random_state


def test_identity_and_uniform_blocks():
    n = NormalizationOperator.uniform(0, 3, np.eye(2) / np.sqrt(2))
    np.testing.assert_allclose(n.block((5,)), np.eye(2) / np.sqrt(2))
    assert NormalizationOperator.identity(0, 3, 2).is_identity()
    assert not n.is_identity()


def test_apply_acts_trivially_on_ancilla():
    n = NormalizationOperator(0, 2, 2, blocks={(1,): np.diag([2.0, 1.0])})
    v = ClockVector((3,), 4, {(1,): np.ones(4, dtype=complex), (2,): np.ones(4, dtype=complex)})
    out = n.apply(v)
    np.testing.assert_allclose(out.block((1,)), [2, 2, 1, 1])
    np.testing.assert_allclose(out.block((2,)), np.ones(4))


def test_dense_matrix_matches_apply(rng):
    n = NormalizationOperator(0, 2, 2, blocks={(1, 0): np.diag([2.0, 0.5])}, default=np.eye(2) / np.sqrt(2))
    v = ClockVector((3, 2), 4, {(1, 0): random_state(4, rng), (2, 1): random_state(4, rng)})
    m = n.as_matrix((3, 2), 4)
    assert m.shape == (24, 24)
    np.testing.assert_allclose(m @ v.to_dense(), n.apply(v).to_dense(), atol=1e-12)
    np.testing.assert_allclose(m[8:12, 8:12], np.kron(np.diag([2.0, 0.5]), np.eye(2)))
    np.testing.assert_allclose(m[4:8, 4:8], np.eye(4) / np.sqrt(2))
    assert np.count_nonzero(m[:4, 4:]) == 0


def test_inverse_round_trip():
    n = NormalizationOperator(0, 2, 2, blocks={(0,): np.diag([2.0, 0.5])}, default=np.eye(2) * 3)
    inv = n.inverse()
    for t in [(0,), (4,)]:
        np.testing.assert_allclose(inv.block(t) @ n.block(t), np.eye(2), atol=1e-12)


def test_block_shape_is_checked():
    with pytest.raises(DimensionMismatchError):
        NormalizationOperator(0, 1, 2, blocks={(0,): np.eye(3)})


@pytest.mark.parametrize(
    ["block", "kind"],
    (
        (np.diag([1.0, -1.0]), "non-positive"),
        (np.diag([1.0, 0.0]), "non-invertible"),
        (np.array([[1.0, 1.0], [0.0, 1.0]]), "non-positive"),
    ),
)
def test_validate_flags_bad_blocks(block, kind):
    report = validate(NormalizationOperator(0, 3, 2, blocks={(2,): block}), final_time=8)
    assert not report.passed
    assert kind in report.kinds()


def test_validate_flags_non_identity_at_boundary():
    report = validate(NormalizationOperator.uniform(1, 1, np.eye(2) * 0.5), final_time=6)
    assert report.kinds() == {"boundary-non-identity"}
    assert validate(NormalizationOperator.uniform(1, 3, np.eye(2) * 0.5), final_time=6).passed


def test_two_speed_example_perspectival_state():
    hs, (n_a, n_b) = two_speed_example(K=2)
    psi = perspectival_state(hs, 1, 1, n_b[1])
    assert psi.tuples == [(2,), (3,)]
    np.testing.assert_allclose(psi.block((2,)), [1 / np.sqrt(2)], atol=1e-12)
    np.testing.assert_allclose(psi.block((3,)), [1 / np.sqrt(2)], atol=1e-12)
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)
    assert perspectival_state(hs, 0, 3, n_a[3]).tuples == [(1,)]


def test_two_speed_example_needs_non_identity_at_boundaries():
    hs, (_, n_b) = two_speed_example(K=2)
    for t in range(3):
        assert perspectival_state(hs, 1, t, n_b[t]).norm() == pytest.approx(1.0, abs=1e-12)
    assert "boundary-non-identity" in validate(n_b[0], final_time=2).kinds()
