import numpy as np
import pytest

from tensor_core import (
    DimensionMismatchError,
    DimLayout,
    complete_basis,
    cut_matrices,
    embed,
    gram,
    haar_unitary,
    is_projector,
    is_unitary,
    operator_schmidt,
    orthonormalize,
    partial_trace,
    phase_aligned_distance,
    random_state,
    reduced_density,
    schmidt_ratio,
    unitary_from_pairs,
    unitary_rest,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)


def test_layout_lookup():
    layout = DimLayout.from_pairs([("control", 2), ("target", 3), ("anc", 1)])
    assert layout.total_dim == 6
    assert layout.dim_of("target") == 3
    assert layout.sub(["anc", "control"]).labels == ("control", "anc")
    assert layout.without(["target"]).dims == (2, 1)
    with pytest.raises(ValueError, match="Unknown factor"):
        layout.index("memory")


def test_layout_rejects_duplicates():
    with pytest.raises(ValueError):
        DimLayout.from_pairs([("a", 2), ("a", 2)])


def test_embed_places_operator_on_named_factor():
    layout = DimLayout.from_pairs([("a", 2), ("b", 3), ("c", 2)])
    np.testing.assert_allclose(embed(X, ["c"], layout), np.kron(np.eye(6), X))
    np.testing.assert_allclose(embed(X, ["a"], layout), np.kron(X, np.eye(6)))


def test_embed_keeps_layout_order_for_non_adjacent_factors(rng):
    layout = DimLayout.from_pairs([("a", 2), ("b", 2), ("c", 2)])
    u, w = haar_unitary(2, rng), haar_unitary(2, rng)
    expected = np.kron(np.kron(u, np.eye(2)), w)
    np.testing.assert_allclose(embed(np.kron(u, w), ["c", "a"], layout), expected, atol=1e-12)


def test_embed_dimension_mismatch():
    layout = DimLayout.from_pairs([("a", 2), ("b", 3)])
    with pytest.raises(DimensionMismatchError):
        embed(X, ["b"], layout)


def test_partial_trace_of_product(rng):
    layout = DimLayout.from_pairs([("a", 2), ("b", 3)])
    rho_a = np.diag([0.25, 0.75]).astype(complex)
    rho_b = np.eye(3) / 3
    np.testing.assert_allclose(partial_trace(np.kron(rho_a, rho_b), ["b"], layout), rho_a, atol=1e-12)


def test_reduced_density_matches_partial_trace(rng):
    layout = DimLayout.from_pairs([("a", 2), ("b", 2), ("c", 3)])
    v = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    full = np.outer(v, v.conj())
    np.testing.assert_allclose(
        reduced_density(v, ["a", "c"], layout), partial_trace(full, ["b"], layout), atol=1e-12
    )


@pytest.mark.parametrize("dim", [1, 2, 5])
def test_haar_unitary_is_unitary(rng, dim):
    assert is_unitary(haar_unitary(dim, rng))


def test_orthonormalize_drops_dependent_columns(rng):
    a = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    q = orthonormalize(np.column_stack([a, a[:, 0] + 2 * a[:, 1]]))
    assert q.shape == (5, 2)
    np.testing.assert_allclose(gram(q), np.eye(2), atol=1e-12)
    assert is_projector(q @ q.conj().T)


def test_complete_basis_is_unitary(rng):
    q = orthonormalize(rng.standard_normal((4, 2)) + 0j)
    assert is_unitary(complete_basis(q))


def test_unitary_from_pairs_maps_domain_to_image(rng):
    u = haar_unitary(6, rng)
    domain = orthonormalize(rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3)))
    w = unitary_from_pairs(domain, u @ domain)
    assert is_unitary(w)
    np.testing.assert_allclose(w @ domain, u @ domain, atol=1e-10)


def test_unitary_from_pairs_rejects_rank_change():
    domain = np.eye(3, dtype=complex)[:, :2]
    image = np.column_stack([np.eye(3)[:, 0], np.eye(3)[:, 0]]).astype(complex)
    with pytest.raises(DimensionMismatchError):
        unitary_from_pairs(domain, image)


def test_phase_aligned_distance_ignores_global_phase(rng):
    u = haar_unitary(3, rng)
    assert phase_aligned_distance(u, np.exp(0.7j) * u) < 1e-12
    assert phase_aligned_distance(u, -u @ np.diag([1, 1, -1])) > 0.5


def test_cut_matrices_follow_the_given_factor_order(rng):
    layout = DimLayout.from_pairs([("a", 2), ("b", 3), ("c", 2)])
    va, vb, vc = random_state(2, rng), random_state(3, rng), random_state(2, rng)
    m = cut_matrices(np.kron(np.kron(va, vb), vc), ["c", "a"], layout)
    assert m.shape == (1, 4, 3)
    np.testing.assert_allclose(m[0], np.outer(np.kron(vc, va), vb), atol=1e-12)


def test_operator_schmidt_of_a_product(rng):
    layout = DimLayout.from_pairs([("a", 2), ("b", 3), ("c", 2)])
    u, r = haar_unitary(2, rng), haar_unitary(6, rng)
    m = embed(u, ["c"], layout) @ embed(r, ["a", "b"], layout)
    s, cut, rest = operator_schmidt(m, ["c"], layout)
    assert schmidt_ratio(s) < 1e-12
    assert phase_aligned_distance(cut[0] / np.linalg.norm(cut[0]), u / np.linalg.norm(u)) < 1e-10
    np.testing.assert_allclose(s[0] * np.kron(rest[0], cut[0]), m, atol=1e-10)


def test_operator_schmidt_of_an_entangling_gate():
    layout = DimLayout.from_pairs([("a", 2), ("b", 2)])
    cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    s, _, _ = operator_schmidt(cnot, ["a"], layout)
    np.testing.assert_allclose(s[:2], [np.sqrt(2), np.sqrt(2)], atol=1e-12)
    assert schmidt_ratio(s) == pytest.approx(1.0)


def test_unitary_rest_recovers_the_factor_off_the_cut(rng):
    layout = DimLayout.from_pairs([("clocks", 2), ("s", 2), ("anc", 2)])
    rest = haar_unitary(4, rng)
    step = embed(rest, ["clocks", "s"], layout)
    before = np.column_stack([random_state(8, rng) for _ in range(3)])
    residual, found = unitary_rest(before, step @ before, ["anc"], layout)
    assert residual < 1e-12
    assert is_unitary(found)
    np.testing.assert_allclose(embed(found, ["clocks", "s"], layout) @ before, step @ before, atol=1e-10)


def test_unitary_rest_rejects_a_step_on_the_cut(rng):
    layout = DimLayout.from_pairs([("clocks", 2), ("s", 2), ("anc", 2)])
    step = embed(haar_unitary(2, rng), ["anc"], layout)
    before = np.column_stack([random_state(8, rng) for _ in range(3)])
    residual, found = unitary_rest(before, step @ before, ["anc"], layout)
    assert found is None
    assert residual > 1e-6
