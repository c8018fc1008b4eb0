"""
Normalization operators N^(X)_t in block form.

Each operator is block diagonal over the remaining clocks: a positive, invertible block n on
the system S for every remaining-clock tuple, tensored with the identity on the ancillas.
Undeclared tuples use `default` (the identity when no default is given).
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from history_state import ClockTuple, ClockVector, HistoryState, all_clock_tuples
from tensor_core import DEFAULT_TOL, DimensionMismatchError, DimLayout

logger = logging.getLogger(__name__)

# Smallest eigenvalue / singular value accepted as positive / invertible.
POSITIVITY_TOL = 1e-12


@dataclass(frozen=True)
class NormalizationOperator:
    agent: int
    time: int
    system_dim: int
    blocks: Mapping[ClockTuple, np.ndarray] = field(default_factory=dict)
    default: np.ndarray | None = None

    def __post_init__(self):
        shape = (self.system_dim, self.system_dim)
        for t, n in self.blocks.items():
            if np.shape(n) != shape:
                raise DimensionMismatchError(f"Block at {t} has shape {np.shape(n)}, expected {shape}")
        if self.default is not None and np.shape(self.default) != shape:
            raise DimensionMismatchError(f"Default block has shape {np.shape(self.default)}, expected {shape}")

    @classmethod
    def identity(cls, agent: int, time: int, system_dim: int) -> "NormalizationOperator":
        return cls(agent, time, system_dim)

    @classmethod
    def uniform(cls, agent: int, time: int, n: np.ndarray) -> "NormalizationOperator":
        """The same block n for every remaining-clock tuple."""
        n = np.asarray(n, dtype=complex)
        return cls(agent, time, n.shape[0], default=n)

    def block(self, t: ClockTuple) -> np.ndarray:
        n = self.blocks.get(tuple(t))
        if n is not None:
            return np.asarray(n, dtype=complex)
        if self.default is not None:
            return np.asarray(self.default, dtype=complex)
        return np.eye(self.system_dim, dtype=complex)

    def all_blocks(self) -> list[tuple[ClockTuple | None, np.ndarray]]:
        """Declared blocks plus the default (keyed None)."""
        found: list[tuple[ClockTuple | None, np.ndarray]] = [(t, np.asarray(n)) for t, n in self.blocks.items()]
        default = np.eye(self.system_dim, dtype=complex) if self.default is None else np.asarray(self.default)
        found.append((None, default))
        return found

    def _ancilla_dim(self, body_dim: int) -> int:
        if body_dim % self.system_dim:
            raise DimensionMismatchError(f"Body dimension {body_dim} is not a multiple of system dim {self.system_dim}")
        return body_dim // self.system_dim

    def apply(self, v: ClockVector) -> ClockVector:
        anc = np.eye(self._ancilla_dim(v.body_dim), dtype=complex)
        blocks = {t: np.kron(self.block(t), anc) @ vec for t, vec in v.blocks.items()}
        return ClockVector(v.clock_dims, v.body_dim, blocks)

    def inverse(self) -> "NormalizationOperator":
        blocks = {t: np.linalg.inv(n) for t, n in self.blocks.items()}
        default = None if self.default is None else np.linalg.inv(self.default)
        return NormalizationOperator(self.agent, self.time, self.system_dim, blocks, default)

    def as_matrix(self, clock_dims: tuple[int, ...], body_dim: int) -> np.ndarray:
        """Dense Σ |t⟩⟨t| ⊗ n_t ⊗ 1_S' on remaining clocks ⊗ S ⊗ S'. Small layouts only."""
        anc = np.eye(self._ancilla_dim(body_dim), dtype=complex)
        return block_diag(*(np.kron(self.block(t), anc) for t in all_clock_tuples(clock_dims)))

    def is_identity(self, tol: float = DEFAULT_TOL) -> bool:
        eye = np.eye(self.system_dim)
        return all(np.max(np.abs(n - eye), initial=0.0) <= tol for _, n in self.all_blocks())


def apply(n_op: NormalizationOperator, v: ClockVector) -> ClockVector:
    return n_op.apply(v)


@dataclass(frozen=True)
class NormalizationFinding:
    kind: str  # non-positive | non-invertible | boundary-non-identity
    clock_tuple: ClockTuple | None
    detail: str


@dataclass(frozen=True)
class NormalizationReport:
    agent: int
    time: int
    findings: tuple[NormalizationFinding, ...]

    @property
    def passed(self) -> bool:
        return not self.findings

    def kinds(self) -> set[str]:
        return {f.kind for f in self.findings}


def validate(n_op: NormalizationOperator, final_time: int, tol: float = DEFAULT_TOL) -> NormalizationReport:
    """Check N.1 (positive, invertible blocks) and N.3 (identity at the synchronized boundary ticks)."""
    findings: list[NormalizationFinding] = []
    for t, n in n_op.all_blocks():
        where = "default block" if t is None else f"block {t}"
        hermitian = np.max(np.abs(n - n.conj().T), initial=0.0) <= tol
        eigs = np.linalg.eigvalsh((n + n.conj().T) / 2)
        if not hermitian or eigs.min() <= POSITIVITY_TOL:
            findings.append(
                NormalizationFinding("non-positive", t, f"{where}: min eigenvalue {eigs.min():.3e}, hermitian={hermitian}")
            )
        sv = np.linalg.svd(n, compute_uv=False)
        if sv.min() < POSITIVITY_TOL:
            findings.append(NormalizationFinding("non-invertible", t, f"{where}: min singular value {sv.min():.3e}"))
    if n_op.time in {0, 1, final_time - 1, final_time} and not n_op.is_identity(tol):
        findings.append(
            NormalizationFinding("boundary-non-identity", None, f"time {n_op.time} is a synchronized boundary tick")
        )
    if findings:
        logger.debug(f"N(agent={n_op.agent}, t={n_op.time}) findings: {[f.kind for f in findings]}")
    return NormalizationReport(n_op.agent, n_op.time, tuple(findings))


def two_speed_example(K: int = 2) -> tuple[HistoryState, list[list[NormalizationOperator]]]:
    """Σ_k |k⟩_A ⊗ |⌊k/2⌋⟩_B for k = 0 … 2K+1, with its normalization operators.

    Clock B sees two readings of A at every one of its own ticks, so N^(B) = 1/√2 at every
    reading (including its first and last); N^(A) is the identity.
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    body = DimLayout.from_pairs([("s", 1)])
    branches = {(k, k // 2): np.ones(1, dtype=complex) for k in range(2 * K + 2)}
    hs = HistoryState(("c_A", "c_B"), body, (2 * K + 1, K), branches)
    n_a = [NormalizationOperator.identity(0, t, 1) for t in range(2 * K + 2)]
    n_b = [NormalizationOperator.uniform(1, t, np.eye(1) / np.sqrt(2)) for t in range(K + 1)]
    return hs, [n_a, n_b]
