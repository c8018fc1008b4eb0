"""
Dense complex linear algebra over labelled tensor-factor layouts.

Everything here works on plain numpy arrays. A `DimLayout` fixes the order of
tensor factors (clocks, system, ancillas) and every helper keeps that order.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from math import prod

import numpy as np
from scipy.linalg import qr

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
# Residual norm below which Gram-Schmidt treats a vector as linearly dependent.
RANK_TOL = 1e-9


class DimensionMismatchError(ValueError):
    """Raised when operator or vector dimensions do not fit the declared factors."""


@dataclass(frozen=True)
class Factor:
    label: str
    dim: int


@dataclass(frozen=True)
class DimLayout:
    """Ordered tensor factors, e.g. c_A, c_B, control, target, anc_A, anc_B."""

    factors: tuple[Factor, ...]

    def __post_init__(self):
        labels = [f.label for f in self.factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"Factor labels must be unique, got {labels}")
        for f in self.factors:
            if f.dim < 1:
                raise ValueError(f"Factor '{f.label}' has dimension {f.dim}; dimensions must be >= 1")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, int]]) -> "DimLayout":
        return cls(tuple(Factor(label, int(dim)) for label, dim in pairs))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def total_dim(self) -> int:
        return prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"Unknown factor label '{label}'; layout has {list(self.labels)}") from None

    def dim_of(self, label: str) -> int:
        return self.factors[self.index(label)].dim

    def sub(self, labels: Iterable[str]) -> "DimLayout":
        """Sub-layout with the given labels, kept in this layout's order."""
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return DimLayout(tuple(f for f in self.factors if f.label in wanted))

    def without(self, labels: Iterable[str]) -> "DimLayout":
        dropped = set(labels)
        for label in dropped:
            self.index(label)
        return DimLayout(tuple(f for f in self.factors if f.label not in dropped))

    def __add__(self, other: "DimLayout") -> "DimLayout":
        return DimLayout(self.factors + other.factors)


# --- Products and predicates ---


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(m)).T


def _require_square(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{what} must be square, got shape {m.shape}")
    return m


def is_unitary(m: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    m = _require_square(m)
    return bool(np.max(np.abs(dagger(m) @ m - np.eye(m.shape[0])), initial=0.0) <= tol)


def is_hermitian(m: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    m = _require_square(m)
    return bool(np.max(np.abs(m - dagger(m)), initial=0.0) <= tol)


def is_projector(m: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    m = _require_square(m)
    return is_hermitian(m, tol) and bool(np.max(np.abs(m @ m - m), initial=0.0) <= tol)


def max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m), initial=0.0))


# --- Factor-aware operations ---


def embed(op: np.ndarray, target_factors: Iterable[str], layout: DimLayout) -> np.ndarray:
    """Place `op` on the named factors and the identity everywhere else.

    The operator's own factor order is the layout order of the targets.
    """
    targets = set(target_factors)
    t_idx = [layout.index(label) for label in layout.labels if label in targets]
    for label in targets:
        layout.index(label)
    dims = list(layout.dims)
    rest_idx = [i for i in range(len(dims)) if i not in t_idx]
    tdim = prod(dims[i] for i in t_idx)
    op = np.asarray(op, dtype=complex)
    if op.shape != (tdim, tdim):
        raise DimensionMismatchError(
            f"Operator of shape {op.shape} does not fit factors {sorted(targets)} of total dimension {tdim}"
        )
    rdim = prod(dims[i] for i in rest_idx)
    full = np.kron(op, np.eye(rdim, dtype=complex))
    order = t_idx + rest_idx
    shape = [dims[i] for i in order]
    perm = list(np.argsort(order))
    n = len(dims)
    full = full.reshape(shape + shape).transpose(perm + [n + p for p in perm])
    return full.reshape(layout.total_dim, layout.total_dim)


def partial_trace(m: np.ndarray, traced_factors: Iterable[str], layout: DimLayout) -> np.ndarray:
    m = _require_square(np.asarray(m))
    if m.shape[0] != layout.total_dim:
        raise DimensionMismatchError(f"Matrix of dimension {m.shape[0]} does not match layout {layout.total_dim}")
    traced = sorted({layout.index(label) for label in traced_factors}, reverse=True)
    dims = list(layout.dims)
    tensor = m.reshape(dims + dims)
    current = len(dims)
    for i in traced:
        tensor = np.trace(tensor, axis1=i, axis2=i + current)
        current -= 1
    kept = prod(d for i, d in enumerate(dims) if i not in traced)
    return tensor.reshape(kept, kept)


def reduced_density(vec: np.ndarray, keep_factors: Iterable[str], layout: DimLayout) -> np.ndarray:
    """Reduced density matrix |v><v| on `keep_factors`, without forming the full outer product."""
    vec = np.asarray(vec)
    if vec.shape != (layout.total_dim,):
        raise DimensionMismatchError(f"Vector of shape {vec.shape} does not match layout {layout.total_dim}")
    keep = [layout.index(label) for label in layout.labels if label in set(keep_factors)]
    rest = [i for i in range(len(layout.dims)) if i not in keep]
    kd = prod(layout.dims[i] for i in keep)
    tensor = vec.reshape(layout.dims).transpose(keep + rest).reshape(kd, -1)
    return tensor @ dagger(tensor)


# --- Random operators ---


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_operator(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian matrix, generically neither unitary nor Hermitian."""
    return (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


# --- Orthonormalization and unitary completion ---


def orthonormalize(vectors: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Modified Gram-Schmidt over the columns in order, with one re-orthogonalization pass.

    Columns whose residual norm drops below `tol` are skipped, so the result spans the
    same space with orthonormal columns.
    """
    vectors = np.asarray(vectors, dtype=complex)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    basis: list[np.ndarray] = []
    for col in vectors.T:
        u = col.copy()
        for _ in range(2):
            for q in basis:
                u -= np.vdot(q, u) * q
        norm = np.linalg.norm(u)
        if norm > tol:
            basis.append(u / norm)
    if not basis:
        return np.zeros((vectors.shape[0], 0), dtype=complex)
    return np.column_stack(basis)


def complete_basis(q: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Extend orthonormal columns `q` to a full basis, adding computational basis vectors in index order."""
    n = q.shape[0]
    basis = [c for c in q.T]
    for i in range(n):
        if len(basis) == n:
            break
        u = np.zeros(n, dtype=complex)
        u[i] = 1.0
        for _ in range(2):
            for b in basis:
                u -= np.vdot(b, u) * b
        norm = np.linalg.norm(u)
        if norm > tol:
            basis.append(u / norm)
    return np.column_stack(basis) if basis else np.zeros((n, 0), dtype=complex)


def gram(states: np.ndarray) -> np.ndarray:
    return dagger(states) @ states


def unitary_from_pairs(domain: np.ndarray, image: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Unitary U with U @ domain = image, canonically completed off the spanned subspace.

    The caller is responsible for checking gram(domain) == gram(image); given that, the map on
    the span is an isometry. Domain and range complements are completed by Gram-Schmidt over the
    computational basis in index order and matched i-th to i-th.
    """
    domain = np.asarray(domain, dtype=complex)
    image = np.asarray(image, dtype=complex)
    if domain.shape != image.shape:
        raise DimensionMismatchError(f"Domain shape {domain.shape} differs from image shape {image.shape}")
    q_dom = orthonormalize(domain, tol)
    coeffs = np.linalg.pinv(domain, rcond=tol) @ q_dom
    q_img = orthonormalize(image @ coeffs, tol)
    if q_img.shape[1] != q_dom.shape[1]:
        raise DimensionMismatchError(
            f"Image spans {q_img.shape[1]} dimensions but domain spans {q_dom.shape[1]}; no isometry exists"
        )
    # Re-derive the image basis from the map itself so columns stay paired with q_dom.
    q_img = image @ coeffs
    full_dom = complete_basis(q_dom)
    full_img = complete_basis(q_img)
    return full_img @ dagger(full_dom)


def phase_aligned_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Operator-norm distance between a and b after removing a global phase.

    The phase is fixed on the largest-magnitude entry of `a`.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Cannot compare shapes {a.shape} and {b.shape}")
    idx = np.unravel_index(np.argmax(np.abs(a)), a.shape)
    phase = 1.0 + 0j
    if abs(b[idx]) > 1e-14:
        ratio = a[idx] / b[idx]
        phase = ratio / abs(ratio)
    return float(np.linalg.norm(a - phase * b, 2))


# --- Factorization across a cut ---


def _cut_axes(cut_factors: Sequence[str], layout: DimLayout) -> tuple[list[int], list[int], int]:
    cut = [layout.index(label) for label in cut_factors]
    if len(set(cut)) != len(cut):
        raise ValueError(f"Repeated factor in cut {list(cut_factors)}")
    rest = [i for i in range(len(layout.dims)) if i not in cut]
    return cut, rest, prod(layout.dims[i] for i in cut)


def cut_matrices(vectors: np.ndarray, cut_factors: Sequence[str], layout: DimLayout) -> np.ndarray:
    """Each column of `vectors` as a (d_cut, d_rest) matrix; cut factors in the order given."""
    vectors = np.asarray(vectors, dtype=complex)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    if vectors.shape[0] != layout.total_dim:
        raise DimensionMismatchError(f"Vectors of length {vectors.shape[0]} do not match layout {layout.total_dim}")
    cut, rest, dc = _cut_axes(cut_factors, layout)
    n = vectors.shape[1]
    tensor = vectors.T.reshape((n,) + layout.dims).transpose([0] + [1 + i for i in cut] + [1 + i for i in rest])
    return tensor.reshape(n, dc, layout.total_dim // dc)


def operator_schmidt(
    m: np.ndarray, cut_factors: Sequence[str], layout: DimLayout
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """M = Σ_k s_k C_k ⊗ R_k across `cut_factors` | rest, from the SVD of the realigned operator.

    Returns (s, C, R) with C[k] on the cut factors (in the order given) and R[k] on the rest.
    """
    m = _require_square(np.asarray(m, dtype=complex))
    if m.shape[0] != layout.total_dim:
        raise DimensionMismatchError(f"Matrix of dimension {m.shape[0]} does not match layout {layout.total_dim}")
    cut, rest, dc = _cut_axes(cut_factors, layout)
    dr = layout.total_dim // dc
    n = len(layout.dims)
    order = cut + [n + i for i in cut] + rest + [n + i for i in rest]
    realigned = m.reshape(layout.dims + layout.dims).transpose(order).reshape(dc * dc, dr * dr)
    u, s, vh = np.linalg.svd(realigned, full_matrices=False)
    return s, u.T.reshape(-1, dc, dc), vh.reshape(-1, dr, dr)


def schmidt_ratio(s: np.ndarray) -> float:
    """s_1 / s_0; zero for a product operator."""
    if len(s) < 2 or s[0] == 0:
        return 0.0
    return float(s[1] / s[0])


def unitary_rest(
    domain: np.ndarray,
    image: np.ndarray,
    cut_factors: Sequence[str],
    layout: DimLayout,
    tol: float = DEFAULT_TOL,
) -> tuple[float, np.ndarray | None]:
    """Unitary R with (1_cut ⊗ R) @ domain = image, or None when there is none.

    R exists iff the operator-valued Gram matrices agree, i.e. B_i B_j† = A_i A_j† on the cut
    for every pair of columns. Returns the largest deviation and R.
    """
    b = cut_matrices(domain, cut_factors, layout)
    a = cut_matrices(image, cut_factors, layout)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Domain shape {np.shape(domain)} differs from image shape {np.shape(image)}")
    rows_b = b.reshape(-1, b.shape[2])
    rows_a = a.reshape(-1, a.shape[2])
    residual = max_abs(rows_b @ dagger(rows_b) - rows_a @ dagger(rows_a))
    if residual > tol:
        return residual, None
    # (1 ⊗ R) b ↔ B Rᵀ, so R maps the rows of every B onto the rows of the matching A.
    return residual, unitary_from_pairs(rows_b.T, rows_a.T)
