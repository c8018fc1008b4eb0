"""
Physical projector and constraint over the span of history states, the single-clock circuit
machinery and the consistency counterexample for the switch.

Projectors are stored on the clock tuples some history actually populates ("support
coordinates": tuple major, body minor). Everything off the support is annihilated by the
projector, so nothing is lost and the comb scenarios stay small.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from history_state import ClockTuple, HistoryState, ScenarioBuilder, evolution_matrices
from scenario_builders import SwitchScenario
from settings import resolve_tol
from tensor_core import DimensionMismatchError, DimLayout, dagger, is_hermitian, max_abs, orthonormalize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicalSubspace:
    """Orthonormal basis of the history-state span, in support coordinates."""

    name: str
    clock_dims: tuple[int, ...]
    body_dim: int
    support: tuple[ClockTuple, ...]
    basis: np.ndarray
    n_inputs: int

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.n_inputs

    def projector(self) -> np.ndarray:
        return self.basis @ dagger(self.basis)

    def coordinates(self, hs: HistoryState) -> np.ndarray:
        """A history state's vector in support coordinates; raises if it leaves the support."""
        stray = set(hs.branches) - set(self.support)
        if stray:
            raise ValueError(f"History populates tuples outside the support: {sorted(stray)[:3]}")
        return np.concatenate([hs.branch(t) for t in self.support])

    def block(self, t_out: ClockTuple, t_in: ClockTuple) -> np.ndarray:
        """⟨t_out| P̂_H |t_in⟩ as a body operator (zero off the support)."""
        pos = {t: i for i, t in enumerate(self.support)}
        d = self.body_dim
        if tuple(t_out) not in pos or tuple(t_in) not in pos:
            return np.zeros((d, d), dtype=complex)
        i, j = pos[tuple(t_out)], pos[tuple(t_in)]
        q_out = self.basis[i * d : (i + 1) * d]
        q_in = self.basis[j * d : (j + 1) * d]
        return q_out @ dagger(q_in)


def span_histories(histories: Sequence[HistoryState], name: str = "histories") -> PhysicalSubspace:
    """Orthonormalize a list of history states on the same layout."""
    if not histories:
        raise ValueError("Need at least one history state")
    first = histories[0]
    for i, hs in enumerate(histories):
        if not first.same_space(hs):
            raise DimensionMismatchError(f"histories[{i}] lives on a different layout")
    support = tuple(sorted({t for hs in histories for t in hs.branches}))
    stacked = np.column_stack([np.concatenate([hs.branch(t) for t in support]) for hs in histories])
    basis = orthonormalize(stacked)
    subspace = PhysicalSubspace(name, first.clock_dims, first.body_dim, support, basis, len(histories))
    if subspace.rank_deficient:
        logger.warning(f"{name}: {len(histories)} inputs span only {subspace.rank} dimensions")
    return subspace


def physical_subspace(builder: ScenarioBuilder, agent_ops: Sequence[np.ndarray] | None = None) -> PhysicalSubspace:
    """Span of the history states of every computational-basis input of S ⊗ S'."""
    d = builder.body_dim
    matrices = evolution_matrices(builder, agent_ops)
    support = tuple(sorted(matrices))
    stacked = np.concatenate([matrices[t] for t in support], axis=0)
    basis = orthonormalize(stacked)
    subspace = PhysicalSubspace(builder.name, builder.clock_dims, d, support, basis, d)
    if subspace.rank_deficient:
        logger.warning(f"{builder.name}: history states span {subspace.rank} of {d} input dimensions")
    logger.debug(f"{builder.name}: physical subspace on {len(support)} clock tuples, rank {subspace.rank}")
    return subspace


def physical_projector(builder: ScenarioBuilder, agent_ops: Sequence[np.ndarray] | None = None) -> np.ndarray:
    return physical_subspace(builder, agent_ops).projector()


def constraint(p_h: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Ĉ = 1 - P̂_H."""
    tol = resolve_tol(tol)
    p_h = np.asarray(p_h, dtype=complex)
    if not is_hermitian(p_h, tol) or max_abs(p_h @ p_h - p_h) > tol:
        raise ValueError(f"Not an orthogonal projector: idempotency residual {max_abs(p_h @ p_h - p_h):.3e}")
    return np.eye(p_h.shape[0], dtype=complex) - p_h


def exponential_identity_check(c: np.ndarray, T: int) -> float:
    """‖(1/T) Σ_{k<T} exp(-2πi Ĉ k/T) - (1 - Ĉ)‖_max."""
    if T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    c = np.asarray(c, dtype=complex)
    step = expm(-2j * np.pi * c / T)
    power = np.eye(c.shape[0], dtype=complex)
    total = np.zeros_like(power)
    for _ in range(T):
        total += power
        power = power @ step
    return max_abs(total / T - (np.eye(c.shape[0]) - c))


# --- Single clock ---


def _circuit_dim(gates: Sequence[np.ndarray], phi: np.ndarray | None = None) -> int:
    if gates:
        return np.shape(gates[0])[0]
    if phi is None:
        raise ValueError("An empty circuit needs an input state to fix the dimension")
    return np.shape(phi)[0]


def partial_product(gates: Sequence[np.ndarray], t1: int, t2: int) -> np.ndarray:
    """U_{t2} ⋯ U_{t1+1} (the identity when t1 >= t2); gates[0] is U_1."""
    d = _circuit_dim(gates)
    out = np.eye(d, dtype=complex)
    for t in range(t1 + 1, t2 + 1):
        out = np.asarray(gates[t - 1], dtype=complex) @ out
    return out


def feynman_history(gates: Sequence[np.ndarray], phi: np.ndarray) -> HistoryState:
    """1/√(T+1) Σ_t |t⟩ ⊗ U_t ⋯ U_1 |φ⟩ with U_0 = 1."""
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    d = _circuit_dim(gates, phi)
    for i, u in enumerate(gates):
        if np.shape(u) != (d, d):
            raise DimensionMismatchError(f"gates[{i}] has shape {np.shape(u)}, expected ({d}, {d})")
    if phi.shape != (d,):
        raise DimensionMismatchError(f"Input has dimension {phi.shape[0]}, expected {d}")
    T = len(gates)
    scale = 1 / np.sqrt(T + 1)
    branches = {}
    v = phi
    for t in range(T + 1):
        if t:
            v = np.asarray(gates[t - 1], dtype=complex) @ v
        if np.any(v != 0):
            branches[(t,)] = scale * v
    return HistoryState(("c",), DimLayout.from_pairs([("s", d)]), (T,), branches)


def feynman_constraint_terms(gates: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Ĥ_t = -½(|t⟩⟨t-1| ⊗ U_t + |t-1⟩⟨t| ⊗ U_t† - |t-1⟩⟨t-1| ⊗ 1 - |t⟩⟨t| ⊗ 1) on clock ⊗ S."""
    T = len(gates)
    d = _circuit_dim(gates) if gates else 1
    eye = np.eye(d, dtype=complex)
    terms = []
    for t in range(1, T + 1):
        u = np.asarray(gates[t - 1], dtype=complex)

        def unit(i: int, j: int) -> np.ndarray:
            m = np.zeros((T + 1, T + 1), dtype=complex)
            m[i, j] = 1.0
            return m

        h = -0.5 * (
            np.kron(unit(t, t - 1), u)
            + np.kron(unit(t - 1, t), dagger(u))
            - np.kron(unit(t - 1, t - 1), eye)
            - np.kron(unit(t, t), eye)
        )
        terms.append(h)
    return terms


def feynman_projector(gates: Sequence[np.ndarray]) -> np.ndarray:
    """Σ_i |Ψ_i⟩⟩⟨⟨Ψ_i| over the basis inputs, dense on clock ⊗ S."""
    d = _circuit_dim(gates)
    columns = [feynman_history(gates, e).to_dense() for e in np.eye(d, dtype=complex)]
    psi = np.column_stack(columns)
    return psi @ dagger(psi)


def projector_block(p: np.ndarray, t1: int, t2: int, T: int) -> np.ndarray:
    """⟨t2| P̂ |t1⟩ of a single-clock projector; equals U_{t2} ⋯ U_{t1+1}/(T+1) for t1 <= t2."""
    p = np.asarray(p)
    if not (0 <= t1 <= T and 0 <= t2 <= T):
        raise ValueError(f"Times ({t1}, {t2}) outside [0, {T}]")
    if p.shape[0] % (T + 1):
        raise DimensionMismatchError(f"Projector dimension {p.shape[0]} is not a multiple of T+1 = {T + 1}")
    d = p.shape[0] // (T + 1)
    return p[t2 * d : (t2 + 1) * d, t1 * d : (t1 + 1) * d]


def history_projector_block(subspace: PhysicalSubspace, t_out: ClockTuple, t_in: ClockTuple) -> np.ndarray:
    """Multi-clock ⟨t_out| P̂_H |t_in⟩. Raw extraction only; no closed form is claimed."""
    return subspace.block(t_out, t_in)


# --- Consistency counterexample ---


def perspective_consistency_check(
    builder: SwitchScenario, u_a: np.ndarray | None = None, u_b: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of ⟨t'_other| N⁻¹(t') 𝒰(t', t) N(t) |t_other⟩ for the two switch perspectives.

    A's side at t' = 5, t = 4 between B-readings 2 → 3; B's side at t' = 3, t = 2 between
    A-readings 4 → 5. They would agree if P̂_H blocks were given by the perspectival unitaries.
    """
    ops = builder.resolve_ops(None if u_a is None and u_b is None else (u_a, u_b))

    def side(agent: int, t_from: int, t_to: int, r_from: int, r_to: int) -> np.ndarray:
        step = builder.candidate_unitary(agent, t_to, ops)
        anc = np.eye(builder.ancilla_dim, dtype=complex)
        n_from = np.kron(builder.normalization(agent, t_from).block((r_from,)), anc)
        n_to = np.kron(builder.normalization(agent, t_to).block((r_to,)), anc)
        return np.linalg.inv(n_to) @ step.block((r_to,), (r_from,)) @ n_from

    lhs = side(0, 4, 5, 2, 3)
    rhs = side(1, 2, 3, 4, 5)
    logger.debug(f"Consistency sides differ by {max_abs(lhs - rhs):.3e}")
    return lhs, rhs
