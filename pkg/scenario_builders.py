"""
Concrete scenario builders: clock operators, the twin paradox, the quantum switch, coherently
controlled combs with clock desynchronization, the reversed Lugano process and stored histories.

Every builder subclasses `ScenarioBuilder` and only has to say which body operator M_t sits at
each clock tuple, which normalization each agent uses and (optionally) the perspectival step
unitaries it has in mind.
"""

import logging
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from history_state import (
    AgentSlot,
    ClockOperator,
    ClockTuple,
    HistoryState,
    ScenarioBuilder,
    _drop,
)
from normalization import NormalizationOperator
from tensor_core import (
    DimensionMismatchError,
    DimLayout,
    dagger,
    embed,
    is_unitary,
    kron,
    unitary_from_pairs,
)

logger = logging.getLogger(__name__)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)

INV_SQRT2 = 1 / np.sqrt(2)


# --- Clock operators ---


def clock_tick(dim: int) -> np.ndarray:
    """T: |t⟩ ↦ |t+1 mod dim⟩."""
    if dim < 2:
        raise ValueError(f"Clock dimension must be at least 2, got {dim}")
    return np.roll(np.eye(dim, dtype=complex), 1, axis=0)


def clock_spread(i: int, dim: int) -> np.ndarray:
    """T'_i: |i-1⟩ ↦ |+_i⟩, |+_i⟩ ↦ |i+2⟩, |-_i⟩ ↦ |-_i⟩ and a plain tick on every other reading.

    |±_i⟩ = (|i⟩ ± |i+1⟩)/√2. The map is unitary because it permutes an orthonormal basis
    (up to the cyclic wrap |dim-1⟩ ↦ |0⟩ when i+2 is not the top reading).
    """
    if dim < 3 or not 1 <= i <= dim - 2:
        raise ValueError(f"Spread index {i} needs 1 <= i <= dim-2 for clock dimension {dim}")
    e = np.eye(dim, dtype=complex)
    plus = (e[:, i] + e[:, i + 1]) * INV_SQRT2
    minus = (e[:, i] - e[:, i + 1]) * INV_SQRT2
    inputs = [e[:, i - 1], plus, minus]
    outputs = [plus, e[:, (i + 2) % dim], minus]
    for j in range(dim):
        if j not in (i - 1, i, i + 1):
            inputs.append(e[:, j])
            outputs.append(e[:, (j + 1) % dim])
    return np.column_stack(outputs) @ dagger(np.column_stack(inputs))


# --- Twin paradox ---


class TwinScenario(ScenarioBuilder):
    """Two agents whose clocks tick at different rates between meetings.

    A acts on (S_A, anc_A) at its reading 2, the shared gate V acts on S_A ⊗ S_B afterwards and
    B acts on (S_B, anc_B) at its reading 6. B's clock runs faster after the first meeting, so
    every reading of A between 2 and 4 is seen twice by B.
    """

    name = "twin"

    BRANCH_STAGES: dict[ClockTuple, int] = {
        (0, 0): 0,
        (1, 1): 0,
        (2, 2): 1,
        (2, 3): 1,
        (3, 4): 2,
        (3, 5): 2,
        (4, 6): 3,
        (4, 7): 3,
        (5, 8): 3,
        (6, 9): 3,
    }

    def __init__(self, u_a: np.ndarray, u_b: np.ndarray, v: np.ndarray, system_dims: Sequence[int] | None = None):
        u_a, u_b, v = (np.asarray(m, dtype=complex) for m in (u_a, u_b, v))
        s_a, s_b = (u_a.shape[0], u_b.shape[0]) if system_dims is None else tuple(system_dims)
        for label, op, s in (("U_A", u_a, s_a), ("U_B", u_b, s_b)):
            if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] % s:
                raise DimensionMismatchError(f"{label} of shape {op.shape} does not act on S ⊗ ancilla with dim(S)={s}")
        if v.shape != (s_a * s_b, s_a * s_b):
            raise DimensionMismatchError(f"V has shape {v.shape}, expected ({s_a * s_b}, {s_a * s_b}) on S_A ⊗ S_B")
        self.v = v
        super().__init__(
            agents=("A", "B"),
            system=DimLayout.from_pairs([("S_A", s_a), ("S_B", s_b)]),
            slots=(AgentSlot(("S_A",), "anc_A"), AgentSlot(("S_B",), "anc_B")),
            ancilla_dims=(u_a.shape[0] // s_a, u_b.shape[0] // s_b),
            final_times=(6, 9),
            times_of_action=(2, 6),
            default_ops=(u_a, u_b),
        )

    def _stages(self, ops: Sequence[np.ndarray]) -> list[np.ndarray]:
        ua = self.embed_agent(ops[0], 0)
        ub = self.embed_agent(ops[1], 1)
        vv = self.embed_system(self.v, ("S_A", "S_B"))
        return [np.eye(self.body_dim, dtype=complex), ua, vv @ ua, ub @ vv @ ua]

    def branch_operators(self, agent_ops: Sequence[np.ndarray]) -> dict[ClockTuple, np.ndarray]:
        stages = self._stages(agent_ops)
        return {t: stages[s] for t, s in self.BRANCH_STAGES.items()}

    def normalization(self, agent: int, t: int) -> NormalizationOperator:
        if agent == 0 and t in (2, 3, 4):
            return NormalizationOperator.uniform(0, t, np.eye(self.system_dim) * INV_SQRT2)
        return NormalizationOperator.identity(agent, t, self.system_dim)

    def candidate_unitary(self, agent: int, t: int, agent_ops: Sequence[np.ndarray]) -> ClockOperator | None:
        ops = self.resolve_ops(agent_ops)
        ua = self.embed_agent(ops[0], 0)
        ub = self.embed_agent(ops[1], 1)
        vv = self.embed_system(self.v, ("S_A", "S_B"))
        one = np.eye(self.body_dim, dtype=complex)
        dims = self.remaining_clock_dims(agent)
        tick = clock_tick(dims[0])
        if agent == 0:
            terms = {
                1: [(tick, one)],
                2: [(clock_spread(2, dims[0]), ua)],
                3: [(tick @ tick, vv)],
                4: [(tick @ tick, ub)],
                5: [(clock_spread(6, dims[0]), one)],
                6: [(tick, one)],
            }
        else:
            ident = np.eye(dims[0], dtype=complex)
            terms = {
                1: [(tick, one)],
                2: [(tick, ua)],
                3: [(ident, one)],
                4: [(tick, vv)],
                5: [(ident, one)],
                6: [(tick, ub)],
                7: [(ident, one)],
                8: [(tick, one)],
                9: [(tick, one)],
            }
        if t not in terms:
            return None
        return ClockOperator.from_terms(dims, self.body_dim, terms[t])


def build_twin(
    u_a: np.ndarray, u_b: np.ndarray, v: np.ndarray, system_dims: Sequence[int] | None = None
) -> TwinScenario:
    return TwinScenario(u_a, u_b, v, system_dims)


# --- Quantum switch ---


class SwitchScenario(ScenarioBuilder):
    """A control qubit decides whether A acts on the target before B or after."""

    name = "switch"

    def __init__(self, u_a: np.ndarray, u_b: np.ndarray, target_dim: int | None = None):
        u_a, u_b = np.asarray(u_a, dtype=complex), np.asarray(u_b, dtype=complex)
        s = u_a.shape[0] if target_dim is None else int(target_dim)
        for label, op in (("U_A", u_a), ("U_B", u_b)):
            if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] % s:
                raise DimensionMismatchError(f"{label} of shape {op.shape} does not act on target ⊗ ancilla, dim(target)={s}")
        super().__init__(
            agents=("A", "B"),
            system=DimLayout.from_pairs([("control", 2), ("target", s)]),
            slots=(AgentSlot(("target",), "anc_A"), AgentSlot(("target",), "anc_B")),
            ancilla_dims=(u_a.shape[0] // s, u_b.shape[0] // s),
            final_times=(7, 7),
            times_of_action=(4, 4),
            default_ops=(u_a, u_b),
        )

    def _control(self, proj: np.ndarray) -> np.ndarray:
        return self.embed_system(proj, ("control",))

    def process(self, agent_ops: Sequence[np.ndarray]) -> np.ndarray:
        ops = self.resolve_ops(agent_ops)
        ua = self.embed_agent(ops[0], 0)
        ub = self.embed_agent(ops[1], 1)
        return self._control(P0) @ ub @ ua + self._control(P1) @ ua @ ub

    def branch_operators(self, agent_ops: Sequence[np.ndarray]) -> dict[ClockTuple, np.ndarray]:
        ua = self.embed_agent(agent_ops[0], 0)
        ub = self.embed_agent(agent_ops[1], 1)
        p0, p1 = self._control(P0), self._control(P1)
        one = np.eye(self.body_dim, dtype=complex)
        g = p0 @ ub @ ua + p1 @ ua @ ub
        return {
            (0, 0): one,
            (1, 1): one,
            (2, 2): one,
            (3, 2): p0,
            (2, 3): p1,
            (4, 3): p0 @ ua,
            (3, 4): p1 @ ub,
            (5, 4): p0 @ ub @ ua,
            (4, 5): p1 @ ua @ ub,
            (5, 5): g,
            (6, 6): g,
            (7, 7): g,
        }

    def normalization(self, agent: int, t: int) -> NormalizationOperator:
        target = np.eye(self.system.dim_of("target"), dtype=complex)
        # The agent that goes first sees the other's clock spread over two readings.
        first, second = (P0, P1) if agent == 0 else (P1, P0)
        if t == 2:
            return NormalizationOperator.uniform(agent, t, kron(first + second * INV_SQRT2, target))
        if t == 5:
            return NormalizationOperator.uniform(agent, t, kron(first * INV_SQRT2 + second, target))
        return NormalizationOperator.identity(agent, t, self.system_dim)

    def candidate_unitary(self, agent: int, t: int, agent_ops: Sequence[np.ndarray]) -> ClockOperator | None:
        if not 1 <= t <= 7:
            return None
        ops = self.resolve_ops(agent_ops)
        mine = self.embed_agent(ops[agent], agent)
        other = self.embed_agent(ops[1 - agent], 1 - agent)
        p_first, p_second = (self._control(P0), self._control(P1))
        if agent == 1:
            p_first, p_second = p_second, p_first
        one = np.eye(self.body_dim, dtype=complex)
        dims = self.remaining_clock_dims(agent)
        tick = clock_tick(dims[0])
        ident = np.eye(dims[0], dtype=complex)
        spread2, spread4 = clock_spread(2, dims[0]), clock_spread(4, dims[0])
        terms = {
            1: [(tick, one)],
            2: [(tick, p_first), (spread2, p_second)],
            3: [(ident, p_first), (spread2, p_second @ other)],
            4: [(tick, mine)],
            5: [(spread4, p_first @ other), (ident, p_second)],
            6: [(spread4, p_first), (tick, p_second)],
            7: [(tick, one)],
        }
        return ClockOperator.from_terms(dims, self.body_dim, terms[t])


def build_switch(u_a: np.ndarray, u_b: np.ndarray, target_dim: int | None = None) -> SwitchScenario:
    return SwitchScenario(u_a, u_b, target_dim)


# --- Coherently controlled combs ---


@dataclass(frozen=True)
class CombSpec:
    """One definite-order comb: V_0, U_π(1), V_1, …, U_π(N), V_N on target ⊗ memory.

    `permutation[m]` is the agent acting at position m+1.
    """

    permutation: tuple[int, ...]
    unitaries: tuple[np.ndarray, ...]
    memory_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "permutation", tuple(int(p) for p in self.permutation))
        object.__setattr__(self, "unitaries", tuple(np.asarray(v, dtype=complex) for v in self.unitaries))

    @property
    def n_agents(self) -> int:
        return len(self.permutation)

    @property
    def target_dim(self) -> int:
        return self.unitaries[0].shape[0] // self.memory_dim


def fixed_order_comb(
    order: Sequence[int],
    unitaries: Sequence[np.ndarray] | None = None,
    target_dim: int = 2,
    memory_dim: int = 1,
) -> CombSpec:
    """A comb that applies the agents in `order` with the given (default: identity) gates between them."""
    if unitaries is None:
        d = target_dim * memory_dim
        unitaries = [np.eye(d, dtype=complex) for _ in range(len(order) + 1)]
    return CombSpec(tuple(order), tuple(unitaries), memory_dim)


def _check_permutation(perm: Sequence[int], n: int, where: str) -> None:
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{where}: {list(perm)} is not a permutation of agents 0..{n - 1}")


@dataclass(frozen=True)
class DesyncSchedule:
    """Clock-freezing plan that leaves agents 2 ticks apart, ordered by `permutation`.

    During the global steps j = 0 … T0 the agent at position m = 1 ticks every step; the agent
    at position m ≥ 2 freezes for 2(m-1) steps starting at j = 2(m-2)N + 2.
    """

    n_agents: int
    permutation: tuple[int, ...]
    positions: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError(f"A desynchronization needs at least 2 agents, got {self.n_agents}")
        _check_permutation(self.permutation, self.n_agents, "permutation")
        object.__setattr__(self, "permutation", tuple(int(p) for p in self.permutation))
        object.__setattr__(self, "positions", {agent: m + 1 for m, agent in enumerate(self.permutation)})

    @property
    def T0(self) -> int:
        return 2 * self.n_agents**2 + 4

    @property
    def T1(self) -> int:
        return self.T0 + 2 * self.n_agents + 1

    def freeze_window(self, m: int) -> tuple[int, int] | None:
        """Inclusive range of j during which position m reads a constant value."""
        if not 1 <= m <= self.n_agents:
            raise ValueError(f"Position {m} outside 1..{self.n_agents}")
        if m == 1:
            return None
        base = 2 * (m - 2) * self.n_agents + 2
        return base, base + 2 * (m - 1)

    def reading(self, m: int, j: int) -> int:
        """t(j) for the agent at position m."""
        if not 0 <= j <= self.T0:
            raise ValueError(f"Step {j} outside 0..{self.T0}")
        window = self.freeze_window(m)
        if window is None or j <= window[0]:
            return j
        if j <= window[1]:
            return window[0]
        return j - 2 * (m - 1)

    def agent_reading(self, agent: int, j: int) -> int:
        return self.reading(self.positions[agent], j)

    def readings(self, j: int) -> ClockTuple:
        """Clock tuple (in agent order) at global step j."""
        return tuple(self.agent_reading(a, j) for a in range(self.n_agents))

    def rows(self) -> list[list[int]]:
        """Per agent, the readings for j = 0 … T0."""
        return [[self.agent_reading(a, j) for j in range(self.T0 + 1)] for a in range(self.n_agents)]


def desync_schedule(n_agents: int, permutation: Sequence[int]) -> DesyncSchedule:
    return DesyncSchedule(int(n_agents), tuple(permutation))


def comb_sequence(schedule: DesyncSchedule) -> list[tuple[ClockTuple, int]]:
    """(clock tuple, comb stage) along one comb's path: desync, comb, buffer, resync.

    Stage s counts the comb operations applied so far (0 … 2N+1); odd stages apply V's, even
    stages apply the agent at position s/2.
    """
    n = schedule.n_agents
    t0, t1 = schedule.T0, schedule.T1
    resync_start = t1 + 2 * n + 2
    lag = {a: 2 * (schedule.positions[a] - 1) for a in range(n)}
    path = [(schedule.readings(j), 0) for j in range(t0 + 1)]
    for s in range(1, 2 * n + 2):
        path.append((tuple(t0 - lag[a] + s for a in range(n)), s))
    for b in range(1, 2 * n + 3):
        path.append((tuple(t1 - lag[a] + b for a in range(n)), 2 * n + 1))
    # Resync runs the desync pattern with the order of agents reversed.
    for j in range(1, t0 + 1):
        readings = tuple(
            resync_start - lag[a] + schedule.reading(n + 1 - schedule.positions[a], j) for a in range(n)
        )
        path.append((readings, 2 * n + 1))
    return path


class ControlledCombScenario(ScenarioBuilder):
    """Σ_k |k⟩⟨k| ⊗ comb_k with every comb run at a common time of action T0 + 2.

    Layout: control (one level per comb), target, memory, then one ancilla per agent. Each
    sector first desynchronizes the clocks in its own order, applies its comb with all clocks
    ticking together, waits out a buffer and resynchronizes in reversed order.
    """

    name = "combs"

    def __init__(
        self,
        combs: Sequence[CombSpec],
        agent_ops: Sequence[np.ndarray] | None = None,
        ancilla_dims: Sequence[int] | None = None,
        agents: Sequence[str] | None = None,
    ):
        self.combs = tuple(combs)
        n, s, e = self._validate(self.combs)
        agents = tuple(agents) if agents is not None else tuple(f"A{m + 1}" for m in range(n))
        if len(agents) != n:
            raise ValueError(f"{len(agents)} agent names for {n} comb positions")
        if agent_ops is not None:
            agent_ops = [np.asarray(op, dtype=complex) for op in agent_ops]
            for a, op in enumerate(agent_ops):
                if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] % s:
                    raise DimensionMismatchError(f"agent_ops[{a}] of shape {op.shape} does not fit target dim {s}")
            ancilla_dims = [op.shape[0] // s for op in agent_ops]
        elif ancilla_dims is None:
            ancilla_dims = [1] * n
        if agent_ops is None:
            agent_ops = [np.eye(s * d, dtype=complex) for d in ancilla_dims]
        self.schedules = tuple(DesyncSchedule(n, c.permutation) for c in self.combs)
        t0 = self.schedules[0].T0
        final = self.schedules[0].T1 + 2 * n + 2 + t0 - 2 * (n - 1)
        super().__init__(
            agents=agents,
            system=DimLayout.from_pairs([("control", len(self.combs)), ("target", s), ("memory", e)]),
            slots=tuple(AgentSlot(("target",), f"anc_{a}") for a in agents),
            ancilla_dims=ancilla_dims,
            final_times=(final,) * n,
            times_of_action=(t0 + 2,) * n,
            default_ops=agent_ops,
        )
        self.paths = tuple(comb_sequence(sched) for sched in self.schedules)
        # counts[agent][t][k]: how many tuples of sector k have that agent reading t.
        self._counts = [defaultdict(lambda: np.zeros(len(self.combs), dtype=int)) for _ in range(n)]
        for k, path in enumerate(self.paths):
            seen = set()
            for tup, _ in path:
                if tup in seen:
                    raise ValueError(f"Comb {k} visits clock tuple {tup} twice")
                seen.add(tup)
                for a in range(n):
                    self._counts[a][tup[a]][k] += 1
        logger.debug(f"Comb builder: N={n}, M={len(self.combs)}, T0={t0}, final reading {final}")

    @staticmethod
    def _validate(combs: Sequence[CombSpec]) -> tuple[int, int, int]:
        if not combs:
            raise ValueError("At least one comb is required")
        n = combs[0].n_agents
        e = combs[0].memory_dim
        s = combs[0].target_dim
        if n < 2:
            raise ValueError(f"combs[0].permutation: need at least 2 agents, got {n}")
        for k, comb in enumerate(combs):
            if comb.n_agents != n:
                raise ValueError(f"combs[{k}].permutation: {comb.n_agents} agents, combs[0] has {n}")
            _check_permutation(comb.permutation, n, f"combs[{k}].permutation")
            if comb.memory_dim != e:
                raise DimensionMismatchError(f"combs[{k}].memory_dim: {comb.memory_dim}, combs[0] has {e}")
            if len(comb.unitaries) != n + 1:
                raise ValueError(f"combs[{k}].unitaries: expected {n + 1} gates, got {len(comb.unitaries)}")
            for j, v in enumerate(comb.unitaries):
                if v.shape != (s * e, s * e):
                    raise DimensionMismatchError(
                        f"combs[{k}].unitaries[{j}]: shape {v.shape}, expected ({s * e}, {s * e}) on target ⊗ memory"
                    )
                if not is_unitary(v):
                    raise ValueError(f"combs[{k}].unitaries[{j}]: not unitary")
        return n, s, e

    @property
    def n_combs(self) -> int:
        return len(self.combs)

    def _sector(self, k: int) -> np.ndarray:
        proj = np.zeros((self.n_combs, self.n_combs), dtype=complex)
        proj[k, k] = 1.0
        return self.embed_system(proj, ("control",))

    def _step(self, k: int, s: int, ops: Sequence[np.ndarray]) -> np.ndarray:
        """The operator that takes comb k from stage s-1 to stage s."""
        comb = self.combs[k]
        if s % 2:
            return self.embed_system(comb.unitaries[(s - 1) // 2], ("target", "memory"))
        agent = comb.permutation[s // 2 - 1]
        return self.embed_agent(ops[agent], agent)

    def _stages(self, k: int, ops: Sequence[np.ndarray]) -> list[np.ndarray]:
        w = self._sector(k)
        stages = [w]
        for s in range(1, 2 * self.n_agents + 2):
            w = self._step(k, s, ops) @ w
            stages.append(w)
        return stages

    def branch_operators(self, agent_ops: Sequence[np.ndarray]) -> dict[ClockTuple, np.ndarray]:
        branches: dict[ClockTuple, np.ndarray] = {}
        for k, path in enumerate(self.paths):
            stages = self._stages(k, agent_ops)
            for tup, s in path:
                branches[tup] = branches[tup] + stages[s] if tup in branches else stages[s].copy()
        return branches

    def normalization(self, agent: int, t: int) -> NormalizationOperator:
        counts = self._counts[agent].get(t)
        if counts is None or np.all(counts <= 1):
            return NormalizationOperator.identity(agent, t, self.system_dim)
        weights = np.diag([1 / np.sqrt(max(c, 1)) for c in counts]).astype(complex)
        rest = np.eye(self.system_dim // self.n_combs, dtype=complex)
        return NormalizationOperator.uniform(agent, t, kron(weights, rest))

    def candidate_unitary(self, agent: int, t: int, agent_ops: Sequence[np.ndarray]) -> ClockOperator | None:
        """Σ_k u_k ⊗ |k⟩⟨k| ⊗ (step of comb k), with u_k a clock shift ξ_k(t-1) ↦ ξ_k(t)."""
        if not 1 <= t <= self.final_times[agent]:
            return None
        ops = self.resolve_ops(agent_ops)
        sides = []
        for path in self.paths:
            before = [(_drop(tup, agent), s) for tup, s in path if tup[agent] == t - 1]
            after = [(_drop(tup, agent), s) for tup, s in path if tup[agent] == t]
            sides.append((before, after))
        window = sorted({tup for before, after in sides for tup, _ in before + after})
        pos = {tup: i for i, tup in enumerate(window)}
        d = self.body_dim
        matrix = np.zeros((len(window) * d, len(window) * d), dtype=complex)
        for k, (before, after) in enumerate(sides):
            xi_before = np.zeros(len(window), dtype=complex)
            xi_after = np.zeros(len(window), dtype=complex)
            for tup, _ in before:
                xi_before[pos[tup]] = 1 / np.sqrt(len(before))
            for tup, _ in after:
                xi_after[pos[tup]] = 1 / np.sqrt(len(after))
            u_k = unitary_from_pairs(xi_before[:, None], xi_after[:, None])
            s_before, s_after = before[0][1], after[0][1]
            if s_after - s_before not in (0, 1):
                raise ValueError(f"Comb {k} jumps from stage {s_before} to {s_after} at reading {t}")
            step = self._step(k, s_after, ops) if s_after != s_before else np.eye(d, dtype=complex)
            matrix += kron(u_k, self._sector(k) @ step)
        return ClockOperator(self.remaining_clock_dims(agent), d, tuple(window), matrix)


def build_controlled_combs(
    combs: Sequence[CombSpec],
    agent_ops: Sequence[np.ndarray] | None = None,
    ancilla_dims: Sequence[int] | None = None,
) -> ControlledCombScenario:
    return ControlledCombScenario(combs, agent_ops, ancilla_dims)


# --- Reversed Lugano process ---

LUGANO_QUBITS = ("q_A", "q_B", "q_C")


def _basis_projector(bitstrings: Sequence[str]) -> np.ndarray:
    proj = np.zeros((8, 8), dtype=complex)
    for bits in bitstrings:
        i = int(bits, 2)
        proj[i, i] = 1.0
    return proj


def lugano_projectors() -> dict[str, np.ndarray]:
    """P_⊥, P_A, P_B, P_C on three qubits; they sum to the identity."""
    return {
        "perp": _basis_projector(["000", "111"]),
        "A": _basis_projector(["001", "101"]),
        "B": _basis_projector(["100", "110"]),
        "C": _basis_projector(["010", "011"]),
    }


def _lugano_layout(ops: Sequence[np.ndarray]) -> DimLayout:
    if len(ops) != 3:
        raise ValueError(f"The Lugano process has three slots, got {len(ops)} operators")
    pairs = [(q, 2) for q in LUGANO_QUBITS]
    for agent, op in zip("ABC", ops):
        if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] % 2:
            raise DimensionMismatchError(f"U_{agent} of shape {op.shape} does not act on a qubit ⊗ ancilla")
        pairs.append((f"anc_{agent}", op.shape[0] // 2))
    return DimLayout.from_pairs(pairs)


def lugano_process(u_a: np.ndarray, u_b: np.ndarray, u_c: np.ndarray) -> np.ndarray:
    """U⊗U⊗U P_⊥ + (X U_A)⊗U_B⊗U_C P_A + U_A⊗(X U_B)⊗U_C P_B + U_A⊗U_B⊗(X U_C) P_C."""
    ops = [np.asarray(u, dtype=complex) for u in (u_a, u_b, u_c)]
    layout = _lugano_layout(ops)
    u_all = np.eye(layout.total_dim, dtype=complex)
    for agent, op in zip("ABC", ops):
        u_all = embed(op, (f"q_{agent}", f"anc_{agent}"), layout) @ u_all
    projectors = lugano_projectors()
    result = u_all @ embed(projectors["perp"], LUGANO_QUBITS, layout)
    for agent in "ABC":
        flip = embed(PAULI_X, (f"q_{agent}",), layout)
        result += flip @ u_all @ embed(projectors[agent], LUGANO_QUBITS, layout)
    return result


def lugano_frame_gate(u: np.ndarray) -> np.ndarray:
    """U† X U: the gate a causal reference frame would need, quadratic in U."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise DimensionMismatchError(f"Frame gate needs a qubit unitary, got shape {u.shape}")
    return dagger(u) @ PAULI_X @ u


class LuganoResyncAttempt(ScenarioBuilder):
    """Desynchronize per projector sector, flip, then try to resynchronize.

    In sector x the clock of agent x lags one tick behind the others from reading 2 until the
    merge at reading 8. Everyone acts at reading 4; X is applied to x's qubit two ticks later,
    controlled on which clock lags. Agent x reads 2 twice in its own sector, and every other
    agent reads 8 twice in sector x, so those readings carry 1/√2 on the matching projectors.
    The projectors refer to the input sectors: with identity operations the flip keeps each
    sector in place and every axiom holds, but once an agent acts with a non-trivial U the
    sectors mix and the step into the merge depends on U.
    """

    name = "lugano-resync-attempt"

    TIME_OF_ACTION = 4
    FLIP = 6
    MERGE = 8
    FINAL = 10

    def __init__(self, u_a: np.ndarray, u_b: np.ndarray, u_c: np.ndarray):
        ops = [np.asarray(u, dtype=complex) for u in (u_a, u_b, u_c)]
        layout = _lugano_layout(ops)
        super().__init__(
            agents=("A", "B", "C"),
            system=layout.sub(LUGANO_QUBITS),
            slots=tuple(AgentSlot((f"q_{a}",), f"anc_{a}") for a in "ABC"),
            ancilla_dims=[layout.dim_of(f"anc_{a}") for a in "ABC"],
            final_times=(self.FINAL,) * 3,
            times_of_action=(self.TIME_OF_ACTION,) * 3,
            default_ops=ops,
        )
        self.projectors = lugano_projectors()

    def branch_operators(self, agent_ops: Sequence[np.ndarray]) -> dict[ClockTuple, np.ndarray]:
        local = [self.embed_agent(op, a) for a, op in enumerate(agent_ops)]
        u_all = local[0] @ local[1] @ local[2]
        branches: dict[ClockTuple, np.ndarray] = defaultdict(lambda: np.zeros((self.body_dim,) * 2, dtype=complex))
        p = self.embed_system(self.projectors["perp"], LUGANO_QUBITS)
        for t in range(self.FINAL + 1):
            branches[(t, t, t)] += p if t < self.TIME_OF_ACTION else u_all @ p
        for x, name in enumerate("ABC"):
            p = self.embed_system(self.projectors[name], LUGANO_QUBITS)
            others = np.eye(self.body_dim, dtype=complex)
            for a in range(3):
                if a != x:
                    others = local[a] @ others
            flipped = self.embed_system(PAULI_X, (f"q_{name}",)) @ u_all @ p
            for t in range(3):
                branches[(t, t, t)] += p
            for g in range(3, self.MERGE + 1):
                tup = tuple(g - 1 if a == x else g for a in range(3))
                if g < self.TIME_OF_ACTION:
                    op = p
                elif g == self.TIME_OF_ACTION:
                    op = others @ p
                elif g < self.FLIP:
                    op = u_all @ p
                else:
                    op = flipped
                branches[tup] += op
            for t in range(self.MERGE, self.FINAL + 1):
                branches[(t, t, t)] += flipped
        return dict(branches)

    def lagging_sectors(self, agent: int, t: int) -> np.ndarray:
        """Projector onto the input sectors in which `agent` reads t twice."""
        if t == 2:
            return self.projectors["ABC"[agent]]
        if t == self.MERGE:
            return sum(self.projectors[x] for i, x in enumerate("ABC") if i != agent)
        return np.zeros((8, 8), dtype=complex)

    def normalization(self, agent: int, t: int) -> NormalizationOperator:
        p = self.lagging_sectors(agent, t)
        if not np.any(p):
            return NormalizationOperator.identity(agent, t, self.system_dim)
        return NormalizationOperator.uniform(agent, t, p * INV_SQRT2 + (np.eye(8) - p))


def build_lugano_resync_attempt(u_a: np.ndarray, u_b: np.ndarray, u_c: np.ndarray) -> LuganoResyncAttempt:
    return LuganoResyncAttempt(u_a, u_b, u_c)


# --- Stored histories ---


class CustomHistoryScenario(ScenarioBuilder):
    """A builder read back from one history state per computational-basis input of S ⊗ S'."""

    name = "custom-history"

    def __init__(
        self,
        histories: Sequence[HistoryState],
        normalization: Mapping[tuple[int, int], NormalizationOperator] | None = None,
        times_of_action: Sequence[int | None] | None = None,
        ancillas: Sequence[str] = (),
    ):
        if not histories:
            raise ValueError("At least one stored history is required")
        first = histories[0]
        for i, hs in enumerate(histories):
            if not first.same_space(hs):
                raise DimensionMismatchError(f"histories[{i}] lives on a different layout than histories[0]")
        if len(histories) != first.body_dim:
            raise DimensionMismatchError(
                f"{len(histories)} histories stored but the body has dimension {first.body_dim}; need one per basis input"
            )
        system = first.body.without(ancillas)
        ancilla_layout = first.body.sub(ancillas)
        if system + ancilla_layout != first.body:
            raise ValueError(f"Ancilla factors {list(ancillas)} must trail the system factors in {first.body.labels}")
        n = first.n_agents
        agents = [label[2:] if label.startswith("c_") else label for label in first.clock_labels]
        times = tuple(times_of_action) if times_of_action is not None else (None,) * n
        super().__init__(
            agents=agents,
            system=system,
            slots=(None,) * n,
            ancilla_dims=(1,) * n,
            final_times=first.final_times,
            times_of_action=times,
            ancilla_layout=ancilla_layout,
        )
        if self.clock_labels != first.clock_labels:
            raise ValueError(f"Clock labels {first.clock_labels} must be of the form c_<agent>")
        self.histories = tuple(histories)
        self._normalization = dict(normalization or {})
        for (agent, t), n_op in self._normalization.items():
            if n_op.system_dim != self.system_dim:
                raise DimensionMismatchError(
                    f"Normalization ({agent}, {t}) has system dim {n_op.system_dim}, expected {self.system_dim}"
                )
        d = first.body_dim
        self._branches: dict[ClockTuple, np.ndarray] = {}
        for i, hs in enumerate(self.histories):
            for tup, v in hs.branches.items():
                if tup not in self._branches:
                    self._branches[tup] = np.zeros((d, d), dtype=complex)
                self._branches[tup][:, i] = v

    def branch_operators(self, agent_ops: Sequence[np.ndarray]) -> dict[ClockTuple, np.ndarray]:
        return dict(self._branches)

    def normalization(self, agent: int, t: int) -> NormalizationOperator:
        found = self._normalization.get((agent, t))
        return found if found is not None else NormalizationOperator.identity(agent, t, self.system_dim)


def build_custom_history(
    histories: Sequence[HistoryState],
    normalization: Mapping[tuple[int, int], NormalizationOperator] | None = None,
    times_of_action: Sequence[int | None] | None = None,
    ancillas: Sequence[str] = (),
) -> CustomHistoryScenario:
    return CustomHistoryScenario(histories, normalization, times_of_action, ancillas)

