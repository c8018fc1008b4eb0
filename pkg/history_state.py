"""
Multi-clock history states and the scenario builders that emit them.

A history state is stored sparsely: one system-plus-ancilla vector per populated tuple of
clock readings. Conditioning on one agent's clock yields a `ClockVector` on the remaining
clocks, and perspectival time steps are `ClockOperator`s acting on such vectors.
"""

from __future__ import annotations

import itertools
import logging
from abc import ABC, abstractmethod
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from math import prod
from typing import TYPE_CHECKING

import numpy as np

from tensor_core import DEFAULT_TOL, DimensionMismatchError, DimLayout, dagger, embed

if TYPE_CHECKING:
    from normalization import NormalizationOperator

logger = logging.getLogger(__name__)

ClockTuple = tuple[int, ...]


def _drop(t: ClockTuple, agent: int) -> ClockTuple:
    return t[:agent] + t[agent + 1 :]


# --- Vectors and operators on remaining clocks ⊗ S ⊗ S' ---


@dataclass(frozen=True)
class ClockVector:
    """Vector on (remaining clocks) ⊗ S ⊗ S', one body block per clock tuple."""

    clock_dims: tuple[int, ...]
    body_dim: int
    blocks: Mapping[ClockTuple, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for t, v in self.blocks.items():
            if len(t) != len(self.clock_dims) or any(not 0 <= r < d for r, d in zip(t, self.clock_dims)):
                raise DimensionMismatchError(f"Clock tuple {t} does not fit clock dims {self.clock_dims}")
            if np.shape(v) != (self.body_dim,):
                raise DimensionMismatchError(f"Block at {t} has shape {np.shape(v)}, expected ({self.body_dim},)")

    @property
    def tuples(self) -> list[ClockTuple]:
        return sorted(self.blocks)

    def block(self, t: ClockTuple) -> np.ndarray:
        v = self.blocks.get(tuple(t))
        return np.zeros(self.body_dim, dtype=complex) if v is None else v

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(v, v).real for v in self.blocks.values())))

    def inner(self, other: ClockVector) -> complex:
        """<self|other>."""
        return complex(sum(np.vdot(v, other.blocks[t]) for t, v in self.blocks.items() if t in other.blocks))

    def scale(self, c: complex) -> ClockVector:
        return ClockVector(self.clock_dims, self.body_dim, {t: c * v for t, v in self.blocks.items()})

    def __add__(self, other: ClockVector) -> ClockVector:
        blocks = dict(self.blocks)
        for t, v in other.blocks.items():
            blocks[t] = blocks[t] + v if t in blocks else v
        return ClockVector(self.clock_dims, self.body_dim, blocks)

    def __sub__(self, other: ClockVector) -> ClockVector:
        return self + other.scale(-1)

    def map_blocks(self, op: np.ndarray) -> ClockVector:
        """Apply the same body operator to every clock block (1_clocks ⊗ op)."""
        return ClockVector(self.clock_dims, self.body_dim, {t: op @ v for t, v in self.blocks.items()})

    def gather(self, window: Sequence[ClockTuple]) -> np.ndarray:
        """Dense coordinates of this vector on `window` (clock-tuple major, body minor)."""
        if not window:
            return np.zeros(0, dtype=complex)
        return np.concatenate([self.block(t) for t in window])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(prod(self.clock_dims) * self.body_dim, dtype=complex)
        for t, v in self.blocks.items():
            i = int(np.ravel_multi_index(t, self.clock_dims)) if self.clock_dims else 0
            out[i * self.body_dim : (i + 1) * self.body_dim] = v
        return out

    def distance(self, other: ClockVector) -> float:
        return (self - other).norm()


def all_clock_tuples(clock_dims: Sequence[int]) -> list[ClockTuple]:
    return [tuple(t) for t in itertools.product(*(range(d) for d in clock_dims))]


@dataclass(frozen=True)
class ClockOperator:
    """Operator on (remaining clocks) ⊗ S ⊗ S' that acts as the identity outside `window`.

    `matrix` acts on the span of the window tuples (tuple major, body minor), so the operator is
    unitary on the full space exactly when `matrix` is.
    """

    clock_dims: tuple[int, ...]
    body_dim: int
    window: tuple[ClockTuple, ...]
    matrix: np.ndarray

    def __post_init__(self):
        n = len(self.window) * self.body_dim
        if np.shape(self.matrix) != (n, n):
            raise DimensionMismatchError(f"Window matrix has shape {np.shape(self.matrix)}, expected ({n}, {n})")
        if len(set(self.window)) != len(self.window):
            raise ValueError("Window tuples must be distinct")

    @classmethod
    def identity(cls, clock_dims: Sequence[int], body_dim: int) -> ClockOperator:
        return cls(tuple(clock_dims), body_dim, (), np.zeros((0, 0), dtype=complex))

    @classmethod
    def from_terms(
        cls, clock_dims: Sequence[int], body_dim: int, terms: Iterable[tuple[np.ndarray, np.ndarray]]
    ) -> ClockOperator:
        """Σ clock_op ⊗ body_op over the full clock range; clock ops are dense on remaining clocks."""
        window = tuple(all_clock_tuples(clock_dims))
        n = len(window) * body_dim
        matrix = np.zeros((n, n), dtype=complex)
        for clock_op, body_op in terms:
            matrix += np.kron(clock_op, body_op)
        return cls(tuple(clock_dims), body_dim, window, matrix)

    def _index(self) -> dict[ClockTuple, int]:
        return {t: i for i, t in enumerate(self.window)}

    def apply(self, v: ClockVector) -> ClockVector:
        if v.clock_dims != self.clock_dims or v.body_dim != self.body_dim:
            raise DimensionMismatchError("Vector and operator live on different spaces")
        d = self.body_dim
        inside = set(self.window)
        blocks = {t: b for t, b in v.blocks.items() if t not in inside}
        if self.window:
            out = self.matrix @ v.gather(self.window)
            for i, t in enumerate(self.window):
                piece = out[i * d : (i + 1) * d]
                if np.any(piece != 0):
                    blocks[t] = piece
        return ClockVector(self.clock_dims, d, blocks)

    def on_window(self, window: Sequence[ClockTuple]) -> np.ndarray:
        """This operator's matrix on a larger window (identity on the added tuples)."""
        d = self.body_dim
        window = tuple(window)
        n = len(window) * d
        out = np.eye(n, dtype=complex)
        pos = {t: i for i, t in enumerate(window)}
        missing = set(self.window) - set(pos)
        if missing:
            raise ValueError(f"Window is missing tuples {sorted(missing)}")
        idx = np.concatenate([np.arange(pos[t] * d, (pos[t] + 1) * d) for t in self.window]) if self.window else []
        if len(idx):
            out[np.ix_(idx, idx)] = self.matrix
        return out

    def compose(self, other: ClockOperator) -> ClockOperator:
        """self ∘ other."""
        window = tuple(sorted(set(self.window) | set(other.window)))
        return ClockOperator(
            self.clock_dims, self.body_dim, window, self.on_window(window) @ other.on_window(window)
        )

    def adjoint(self) -> ClockOperator:
        return ClockOperator(self.clock_dims, self.body_dim, self.window, dagger(self.matrix))

    def block(self, out: ClockTuple, inp: ClockTuple) -> np.ndarray:
        """The body operator <out| · |inp> between two clock basis states."""
        d = self.body_dim
        pos = self._index()
        out, inp = tuple(out), tuple(inp)
        if out in pos and inp in pos:
            i, j = pos[out], pos[inp]
            return self.matrix[i * d : (i + 1) * d, j * d : (j + 1) * d]
        if out not in pos and inp not in pos and out == inp:
            return np.eye(d, dtype=complex)
        return np.zeros((d, d), dtype=complex)

    def is_unitary(self, tol: float = DEFAULT_TOL) -> bool:
        n = self.matrix.shape[0]
        return bool(np.max(np.abs(dagger(self.matrix) @ self.matrix - np.eye(n)), initial=0.0) <= tol)


# --- History states ---


@dataclass(frozen=True)
class HistoryState:
    """|Ψ⟩⟩ = Σ_t |t_1 … t_N⟩ ⊗ |ψ(t_1 … t_N)⟩, kept unnormalized as the protocol writes it."""

    clock_labels: tuple[str, ...]
    body: DimLayout
    final_times: tuple[int, ...]
    branches: Mapping[ClockTuple, np.ndarray]

    def __post_init__(self):
        if len(self.clock_labels) != len(self.final_times):
            raise ValueError(f"{len(self.clock_labels)} clocks but {len(self.final_times)} final times")
        dim = self.body.total_dim
        for t, v in self.branches.items():
            if len(t) != self.n_agents:
                raise DimensionMismatchError(f"Clock tuple {t} has {len(t)} readings, expected {self.n_agents}")
            if any(r < 0 or r > T for r, T in zip(t, self.final_times)):
                raise ValueError(f"Clock tuple {t} exceeds final times {self.final_times}")
            if np.shape(v) != (dim,):
                raise DimensionMismatchError(f"Branch {t} has shape {np.shape(v)}, expected ({dim},)")
            if not np.any(v):
                raise ValueError(f"Branch {t} is the zero vector; leave the tuple out instead")
        for t in (self.initial_tuple, self.final_tuple):
            if t not in self.branches:
                raise ValueError(f"History state has no branch at {t}")

    @property
    def n_agents(self) -> int:
        return len(self.clock_labels)

    @property
    def body_dim(self) -> int:
        return self.body.total_dim

    @property
    def clock_dims(self) -> tuple[int, ...]:
        return tuple(T + 1 for T in self.final_times)

    @property
    def layout(self) -> DimLayout:
        return DimLayout.from_pairs(zip(self.clock_labels, self.clock_dims)) + self.body

    @property
    def tuples(self) -> list[ClockTuple]:
        return sorted(self.branches)

    @property
    def initial_tuple(self) -> ClockTuple:
        return (0,) * self.n_agents

    @property
    def final_tuple(self) -> ClockTuple:
        return tuple(self.final_times)

    def branch(self, t: Sequence[int]) -> np.ndarray:
        v = self.branches.get(tuple(t))
        return np.zeros(self.body_dim, dtype=complex) if v is None else v

    def same_space(self, other: HistoryState) -> bool:
        return (
            self.clock_labels == other.clock_labels
            and self.body == other.body
            and self.final_times == other.final_times
        )

    @classmethod
    def linear_combination(cls, coeffs: Sequence[complex], states: Sequence[HistoryState]) -> HistoryState:
        if not states:
            raise ValueError("Need at least one history state")
        first = states[0]
        branches: dict[ClockTuple, np.ndarray] = {}
        for c, hs in zip(coeffs, states, strict=True):
            if not first.same_space(hs):
                raise DimensionMismatchError("History states live on different layouts")
            for t, v in hs.branches.items():
                branches[t] = branches[t] + c * v if t in branches else c * v
        branches = {t: v for t, v in branches.items() if np.any(v != 0)}
        return cls(first.clock_labels, first.body, first.final_times, branches)

    def to_dense(self) -> np.ndarray:
        """Full vector on clocks ⊗ S ⊗ S' (clock-major). Only sensible for small layouts."""
        out = np.zeros(prod(self.clock_dims) * self.body_dim, dtype=complex)
        for t, v in self.branches.items():
            i = int(np.ravel_multi_index(t, self.clock_dims))
            out[i * self.body_dim : (i + 1) * self.body_dim] = v
        return out


def history_inner(a: HistoryState, b: HistoryState) -> complex:
    """⟨⟨a|b⟩⟩, summed over the clock tuples both states populate."""
    if not a.same_space(b):
        raise DimensionMismatchError(
            f"Layouts differ: {a.clock_labels}/{a.final_times} vs {b.clock_labels}/{b.final_times}"
        )
    return complex(sum(np.vdot(v, b.branches[t]) for t, v in a.branches.items() if t in b.branches))


def remaining_clock_dims(hs: HistoryState, agent: int) -> tuple[int, ...]:
    return _drop(hs.clock_dims, agent)


def condition(hs: HistoryState, agent: int, t: int) -> ClockVector:
    """Raw ⟨t_X|Ψ⟩⟩ on the remaining clocks, before any normalization."""
    if not 0 <= agent < hs.n_agents:
        raise ValueError(f"Agent index {agent} out of range for {hs.n_agents} clocks")
    if not 0 <= t <= hs.final_times[agent]:
        raise ValueError(f"Reading {t} outside [0, {hs.final_times[agent]}] for clock {hs.clock_labels[agent]}")
    blocks = {_drop(tup, agent): v for tup, v in hs.branches.items() if tup[agent] == t}
    return ClockVector(remaining_clock_dims(hs, agent), hs.body_dim, blocks)


def condition_all(hs: HistoryState, agent: int) -> list[ClockVector]:
    """Every conditioned slice ⟨t|Ψ⟩⟩ for t = 0 … T_X, in one pass over the branches."""
    dims = remaining_clock_dims(hs, agent)
    slices: list[dict[ClockTuple, np.ndarray]] = [{} for _ in range(hs.final_times[agent] + 1)]
    for tup, v in hs.branches.items():
        slices[tup[agent]][_drop(tup, agent)] = v
    return [ClockVector(dims, hs.body_dim, blocks) for blocks in slices]


def perspectival_state(hs: HistoryState, agent: int, t: int, n_op: NormalizationOperator) -> ClockVector:
    """|ψ_X(t)⟩ = N_t ⟨t|Ψ⟩⟩."""
    raw = condition(hs, agent, t)
    if not raw.blocks:
        raise ValueError(f"Clock {hs.clock_labels[agent]} never reads {t}: conditioned vector is zero")
    return n_op.apply(raw)


# --- Builders ---


@dataclass(frozen=True)
class AgentSlot:
    """Where an agent's operation acts: some system factors plus the agent's own ancilla."""

    factors: tuple[str, ...]
    ancilla: str

    @property
    def labels(self) -> tuple[str, ...]:
        return self.factors + (self.ancilla,)


class ScenarioBuilder(ABC):
    """Abstract base for every protocol that emits history states.

    A concrete builder fixes the clocks, the system factors and each agent's slot, and maps
    (input state, agent operations) to a history state. The map is linear in the input and
    must accept arbitrary (non-unitary) operators by linear extension.
    """

    name: str = "scenario"

    def __init__(
        self,
        agents: Sequence[str],
        system: DimLayout,
        slots: Sequence[AgentSlot | None],
        ancilla_dims: Sequence[int],
        final_times: Sequence[int],
        times_of_action: Sequence[int | None],
        default_ops: Sequence[np.ndarray] | None = None,
        ancilla_layout: DimLayout | None = None,
    ):
        if not (len(agents) == len(slots) == len(ancilla_dims) == len(final_times) == len(times_of_action)):
            raise ValueError("agents, slots, ancilla dims, final times and times of action must align")
        if any(s is None for s in slots) and not all(s is None for s in slots):
            raise ValueError("Either every agent has an operation slot or none does")
        self.agents = tuple(agents)
        self.system = system
        self.slots = tuple(slots)
        ancillas = [(slot.ancilla, dim) for slot, dim in zip(slots, ancilla_dims) if slot is not None]
        # Slotless builders (custom histories) may still carry ancilla factors.
        self.ancillas = ancilla_layout if ancilla_layout is not None else DimLayout.from_pairs(ancillas)
        self.body = system + self.ancillas
        self.final_times = tuple(int(T) for T in final_times)
        self.times_of_action = tuple(times_of_action)
        for agent, (t_star, T) in enumerate(zip(self.times_of_action, self.final_times)):
            if t_star is not None and not 1 <= t_star <= T:
                raise ValueError(f"Time of action {t_star} of agent {self.agents[agent]} outside [1, {T}]")
        self.default_ops = tuple(np.asarray(op, dtype=complex) for op in default_ops) if default_ops else None

    # --- Layout helpers ---

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def clock_labels(self) -> tuple[str, ...]:
        return tuple(f"c_{a}" for a in self.agents)

    @property
    def clock_dims(self) -> tuple[int, ...]:
        return tuple(T + 1 for T in self.final_times)

    @property
    def system_dim(self) -> int:
        return self.system.total_dim

    @property
    def ancilla_dim(self) -> int:
        return self.ancillas.total_dim

    @property
    def body_dim(self) -> int:
        return self.body.total_dim

    def remaining_clock_dims(self, agent: int) -> tuple[int, ...]:
        return _drop(self.clock_dims, agent)

    def agent_index(self, agent: int | str) -> int:
        if isinstance(agent, str):
            if agent not in self.agents:
                raise ValueError(f"Unknown agent '{agent}'; agents are {list(self.agents)}")
            return self.agents.index(agent)
        if not 0 <= agent < self.n_agents:
            raise ValueError(f"Agent index {agent} out of range for {self.n_agents} agents")
        return agent

    def has_slot(self, agent: int) -> bool:
        return self.slots[agent] is not None

    def slot_layout(self, agent: int) -> DimLayout:
        slot = self.slots[agent]
        if slot is None:
            raise ValueError(f"Agent {self.agents[agent]} has no operation slot in {self.name}")
        return self.body.sub(slot.labels)

    def slot_dim(self, agent: int) -> int:
        return self.slot_layout(agent).total_dim

    def embed_agent(self, op: np.ndarray, agent: int) -> np.ndarray:
        """Agent operation as an operator on the full body S ⊗ S'."""
        return embed(op, self.slots[agent].labels, self.body)

    def embed_system(self, op: np.ndarray, factors: Iterable[str]) -> np.ndarray:
        return embed(op, factors, self.body)

    def physical_inputs(self) -> np.ndarray:
        """Columns |i⟩_S ⊗ |0⟩_S' for every computational basis state of S."""
        cols = np.zeros((self.body_dim, self.system_dim), dtype=complex)
        for i in range(self.system_dim):
            cols[i * self.ancilla_dim, i] = 1.0
        return cols

    def resolve_ops(self, agent_ops: Sequence[np.ndarray] | None) -> tuple[np.ndarray, ...]:
        ops = self.default_ops if agent_ops is None else tuple(np.asarray(op, dtype=complex) for op in agent_ops)
        n_slots = sum(1 for s in self.slots if s is not None)
        if ops is None:
            if n_slots:
                raise ValueError(f"{self.name} needs {n_slots} agent operators and has no defaults")
            return ()
        if len(ops) != n_slots:
            raise ValueError(f"{self.name} expects {n_slots} agent operators, got {len(ops)}")
        for agent, op in enumerate(ops):
            dim = self.slot_dim(agent)
            if op.shape != (dim, dim):
                raise DimensionMismatchError(
                    f"Operator for agent {self.agents[agent]} has shape {op.shape}, slot needs ({dim}, {dim})"
                )
        return ops

    def with_op(self, agent_ops: Sequence[np.ndarray] | None, agent: int, op: np.ndarray) -> tuple[np.ndarray, ...]:
        """Copy of the operator tuple with one slot replaced."""
        ops = list(self.resolve_ops(agent_ops))
        ops[agent] = np.asarray(op, dtype=complex)
        return tuple(ops)

    # --- Protocol ---

    @abstractmethod
    def branch_operators(self, agent_ops: Sequence[np.ndarray]) -> dict[ClockTuple, np.ndarray]:
        """M_t for every clock tuple the protocol can populate (operators on S ⊗ S')."""

    @abstractmethod
    def normalization(self, agent: int, t: int) -> NormalizationOperator:
        """Declared N^(X)_t. Depends on the agent and the reading only."""

    def candidate_unitary(self, agent: int, t: int, agent_ops: Sequence[np.ndarray]) -> ClockOperator | None:
        """Declared perspectival step 𝒰_X(t, t-1), when the protocol writes one down."""
        return None

    def construct(self, state: np.ndarray, agent_ops: Sequence[np.ndarray] | None = None) -> HistoryState:
        state = np.asarray(state, dtype=complex).reshape(-1)
        return self.construct_many(state[:, None], agent_ops)[0]

    def construct_many(self, states: np.ndarray, agent_ops: Sequence[np.ndarray] | None = None) -> list[HistoryState]:
        """One history state per column of `states`, from a single evaluation of the branch operators."""
        ops = self.resolve_ops(agent_ops)
        states = np.asarray(states, dtype=complex)
        if states.ndim != 2 or states.shape[0] != self.body_dim:
            raise DimensionMismatchError(f"Inputs have shape {states.shape}, expected ({self.body_dim}, n)")
        images = {t: m @ states for t, m in self.branch_operators(ops).items()}
        histories = []
        for i in range(states.shape[1]):
            branches = {t: img[:, i] for t, img in images.items() if np.any(img[:, i] != 0)}
            histories.append(HistoryState(self.clock_labels, self.body, self.final_times, branches))
        return histories


def evolution_matrix(builder: ScenarioBuilder, agent_ops: Sequence[np.ndarray] | None, t: ClockTuple) -> np.ndarray:
    """M_t, assembled column by column from the branch at `t` for each computational-basis input."""
    return evolution_matrices(builder, agent_ops).get(tuple(t), np.zeros((builder.body_dim,) * 2, dtype=complex))


def evolution_matrices(builder: ScenarioBuilder, agent_ops: Sequence[np.ndarray] | None) -> dict[ClockTuple, np.ndarray]:
    """M_t for every populated tuple, from one run per basis input."""
    d = builder.body_dim
    columns: dict[ClockTuple, np.ndarray] = {}
    for i, hs in enumerate(builder.construct_many(np.eye(d, dtype=complex), agent_ops)):
        for t, v in hs.branches.items():
            if v.shape != (d,):
                raise DimensionMismatchError(f"Branch {t} for basis input {i} has shape {v.shape}")
            if t not in columns:
                columns[t] = np.zeros((d, d), dtype=complex)
            columns[t][:, i] = v
    return columns
