"""
Checks a scenario builder against the axioms for multi-agent history states.

    S.1  initial branch is the input, ancillas in |0⟩
    S.2  clocks start and stop together, first and last ticks are idle
    N.1  normalization blocks are positive and invertible
    N.2  normalization acts trivially on the ancillas
    N.3  normalization is the identity at the synchronized boundary ticks
    U.1  each perspectival step is an input-independent unitary
    U.2  steps compose
    U.3  an agent's operation enters only at their time of action
    affine-linearity of every branch in every agent's operation

Results are data (`CheckResult`, `AxiomReport`); nothing here raises on a failed check.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from history_state import ClockOperator, ClockTuple, ClockVector, ScenarioBuilder, condition_all
from normalization import NormalizationOperator, validate
from settings import make_rng, resolve_samples, resolve_tol
from tensor_core import (
    RANK_TOL,
    DimLayout,
    dagger,
    embed,
    gram,
    haar_unitary,
    max_abs,
    operator_schmidt,
    phase_aligned_distance,
    random_operator,
    schmidt_ratio,
    unitary_from_pairs,
    unitary_rest,
)

logger = logging.getLogger(__name__)

PASS, FAIL, SKIP = "pass", "fail", "skip"


class UnitaryExistenceError(ValueError):
    """No input-independent unitary maps an agent's perspectival states at t-1 to those at t."""

    def __init__(self, agent: int, time: int, residual: float):
        self.agent = agent
        self.time = time
        self.residual = residual
        super().__init__(f"Gram matrices of agent {agent} differ between t={time - 1} and t={time} by {residual:.3e}")


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str
    witness: dict = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status != FAIL


@dataclass
class AxiomReport:
    scenario: str
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def get(self, name: str) -> CheckResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(f"No check named '{name}' in report for {self.scenario}")

    def render(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        for r in self.results:
            line = f"  {r.name:<18} {r.status.upper():<4}"
            if r.message:
                line += f"  {r.message}"
            if r.witness:
                line += "  [" + ", ".join(f"{k}={v}" for k, v in r.witness.items()) + "]"
            lines.append(line)
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


@dataclass
class PerspectivalTrajectory:
    """states[t][i]: agent's normalized perspectival state at reading t for physical input i."""

    agent: int
    states: list[list[ClockVector]]
    step_unitaries: list[ClockOperator | None]

    @property
    def final_time(self) -> int:
        return len(self.states) - 1

    def propagator(self, t: int, t0: int) -> ClockOperator:
        """𝒰(t, t0) as the product of the steps t0+1 … t."""
        if not 0 <= t0 <= t <= self.final_time:
            raise ValueError(f"Need 0 <= t0 <= t <= {self.final_time}, got t0={t0}, t={t}")
        first = self.states[0][0]
        op = ClockOperator.identity(first.clock_dims, first.body_dim)
        for s in range(t0 + 1, t + 1):
            op = self.step_unitaries[s].compose(op)
        return op


# --- Perspectival states ---


def _insert(t: ClockTuple, agent: int, reading: int) -> ClockTuple:
    return t[:agent] + (reading,) + t[agent:]


def _normalizations(builder: ScenarioBuilder, agent: int) -> list[NormalizationOperator]:
    return [builder.normalization(agent, t) for t in range(builder.final_times[agent] + 1)]


def perspectival_states(
    builder: ScenarioBuilder,
    agent_ops: Sequence[np.ndarray] | None,
    agent: int,
    n_ops: Sequence[NormalizationOperator] | None = None,
    inputs: np.ndarray | None = None,
) -> list[list[ClockVector]]:
    """N_t ⟨t|Ψ⟩⟩ for every reading t of `agent` and every input column (physical inputs by default)."""
    n_ops = list(n_ops) if n_ops is not None else _normalizations(builder, agent)
    inputs = builder.physical_inputs() if inputs is None else inputs
    histories = builder.construct_many(inputs, agent_ops)
    per_input = [condition_all(hs, agent) for hs in histories]
    return [[n_ops[t].apply(slices[t]) for slices in per_input] for t in range(builder.final_times[agent] + 1)]


def _window(*groups: Sequence[ClockVector]) -> list[ClockTuple]:
    return sorted({t for group in groups for v in group for t in v.blocks})


def _stack(vectors: Sequence[ClockVector], window: Sequence[ClockTuple]) -> np.ndarray:
    if not window:
        return np.zeros((0, len(vectors)), dtype=complex)
    return np.column_stack([v.gather(window) for v in vectors])


# --- S.1 / S.2 ---


def check_boundaries(
    builder: ScenarioBuilder, agent_ops: Sequence[np.ndarray] | None = None, tol: float | None = None
) -> list[CheckResult]:
    tol = resolve_tol(tol)
    branches = builder.branch_operators(builder.resolve_ops(agent_ops))
    inputs = builder.physical_inputs()
    n = builder.n_agents
    zero, one = (0,) * n, (1,) * n
    final = tuple(builder.final_times)
    before_final = tuple(T - 1 for T in final)
    empty = np.zeros((builder.body_dim,) * 2, dtype=complex)

    def image(t: ClockTuple) -> np.ndarray:
        return branches.get(t, empty) @ inputs

    s1_residual = max_abs(image(zero) - inputs)
    if s1_residual > tol:
        s1 = CheckResult("S.1", FAIL, {"tuple": zero, "residual": f"{s1_residual:.3e}"}, "initial branch is not the input")
    else:
        s1 = CheckResult("S.1", PASS, message="initial branch equals |ψ⟩ ⊗ |0⟩")

    for t in sorted(branches):
        if not np.any(branches[t] @ inputs):
            continue
        starts = [r == 0 for r in t]
        stops = [r == T for r, T in zip(t, final)]
        if any(starts) and not all(starts):
            return [s1, CheckResult("S.2", FAIL, {"tuple": t}, "one clock reads 0 while another has started")]
        if any(stops) and not all(stops):
            return [s1, CheckResult("S.2", FAIL, {"tuple": t}, "one clock reads its final time while another runs")]
    if not np.any(image(final)):
        return [s1, CheckResult("S.2", FAIL, {"tuple": final}, "no branch at the final readings")]
    for a, b, what in ((one, zero, "first"), (before_final, final, "last")):
        residual = max_abs(image(a) - image(b))
        if residual > tol:
            witness = {"tuple": a, "residual": f"{residual:.3e}"}
            return [s1, CheckResult("S.2", FAIL, witness, f"the {what} tick is not idle")]
    return [s1, CheckResult("S.2", PASS, message="clocks start and stop together with idle boundary ticks")]


# --- N.1 / N.2 / N.3 ---


def check_normalization(
    builder: ScenarioBuilder,
    agent_ops: Sequence[np.ndarray] | None = None,
    seed: int | None = None,
    tol: float | None = None,
) -> list[CheckResult]:
    tol = resolve_tol(tol)
    rng = make_rng(seed)
    n1 = n3 = None
    for agent in range(builder.n_agents):
        T = builder.final_times[agent]
        for t, n_op in enumerate(_normalizations(builder, agent)):
            report = validate(n_op, T, tol)
            for finding in report.findings:
                witness = {"agent": builder.agents[agent], "time": t}
                if finding.clock_tuple is not None:
                    witness["tuple"] = finding.clock_tuple
                if finding.kind == "boundary-non-identity":
                    n3 = n3 or CheckResult("N.3", FAIL, witness, finding.detail)
                else:
                    n1 = n1 or CheckResult("N.1", FAIL, witness, finding.detail)
    n1 = n1 or CheckResult("N.1", PASS, message="positive, invertible, declared per (agent, reading) only")
    n3 = n3 or CheckResult("N.3", PASS, message="identity at 0, 1, T-1, T")

    if builder.ancilla_dim == 1:
        return [n1, CheckResult("N.2", PASS, message="no ancilla degrees of freedom"), n3]
    inputs = builder.physical_inputs()
    histories = builder.construct_many(inputs, agent_ops)
    r = embed(random_operator(builder.ancilla_dim, rng), builder.ancillas.labels, builder.body)
    for agent in range(builder.n_agents):
        n_ops = _normalizations(builder, agent)
        for hs in histories:
            for t, raw in enumerate(condition_all(hs, agent)):
                lhs = n_ops[t].apply(raw.map_blocks(r))
                rhs = n_ops[t].apply(raw).map_blocks(r)
                residual = lhs.distance(rhs)
                if residual > tol * max(1.0, raw.norm()):
                    witness = {"agent": builder.agents[agent], "time": t, "residual": f"{residual:.3e}"}
                    return [n1, CheckResult("N.2", FAIL, witness, "normalization does not commute with S' operators"), n3]
    return [n1, CheckResult("N.2", PASS, message="commutes with random operators on S'"), n3]


# --- U.1 / U.2 ---


def extract_step_unitaries(
    builder: ScenarioBuilder,
    agent_ops: Sequence[np.ndarray] | None,
    agent: int,
    n_ops: Sequence[NormalizationOperator] | None = None,
    tol: float | None = None,
) -> PerspectivalTrajectory:
    """Input-independent unitaries 𝒰(t, t-1) for every step, canonically completed off the reachable span.

    Raises UnitaryExistenceError at the first t where the Gram matrices of the states differ.
    """
    tol = resolve_tol(tol)
    states = perspectival_states(builder, agent_ops, agent, n_ops)
    dims = builder.remaining_clock_dims(agent)
    steps: list[ClockOperator | None] = [None]
    for t in range(1, len(states)):
        window = _window(states[t - 1], states[t])
        before, after = _stack(states[t - 1], window), _stack(states[t], window)
        residual = max_abs(gram(before) - gram(after))
        if residual > tol:
            raise UnitaryExistenceError(agent, t, residual)
        steps.append(ClockOperator(dims, builder.body_dim, tuple(window), unitary_from_pairs(before, after)))
        logger.debug(f"Agent {builder.agents[agent]}: step {t} on a window of {len(window)} clock tuples")
    return PerspectivalTrajectory(agent, states, steps)


def check_unitary_evolution(
    builder: ScenarioBuilder, agent_ops: Sequence[np.ndarray] | None = None, tol: float | None = None
) -> tuple[CheckResult, dict[int, PerspectivalTrajectory]]:
    """U.1 for every agent; also returns the trajectories it extracted."""
    tol = resolve_tol(tol)
    trajectories: dict[int, PerspectivalTrajectory] = {}
    failure = None
    for agent in range(builder.n_agents):
        try:
            traj = extract_step_unitaries(builder, agent_ops, agent, tol=tol)
        except UnitaryExistenceError as e:
            witness = {"agent": builder.agents[agent], "time": e.time, "residual": f"{e.residual:.3e}"}
            failure = failure or CheckResult("U.1", FAIL, witness, "no input-independent unitary step")
            continue
        initial = _stack(traj.states[0], _window(traj.states[0]))
        residual = max_abs(gram(initial) - np.eye(initial.shape[1]))
        if residual > tol:
            witness = {"agent": builder.agents[agent], "time": 0, "residual": f"{residual:.3e}"}
            failure = failure or CheckResult("U.1", FAIL, witness, "perspectival states are not normalized")
            continue
        trajectories[agent] = traj
    return failure or CheckResult("U.1", PASS, message="unitary, input-independent steps for every agent"), trajectories


def check_composition(trajectory: PerspectivalTrajectory, tol: float | None = None) -> CheckResult:
    """U.2: stepping from any t0 reproduces the states at every later t; two-step products compose."""
    tol = resolve_tol(tol)
    states = trajectory.states
    worst = (0.0, None)
    for t0 in range(len(states) - 1):
        current = states[t0]
        for t in range(t0 + 1, len(states)):
            current = [trajectory.step_unitaries[t].apply(v) for v in current]
            residual = max(c.distance(s) for c, s in zip(current, states[t]))
            if residual > worst[0]:
                worst = (residual, (t0, t))
    for t in range(2, len(states)):
        pair = trajectory.propagator(t, t - 2)
        residual = max(pair.apply(v).distance(s) for v, s in zip(states[t - 2], states[t]))
        if residual > worst[0]:
            worst = (residual, (t - 2, t))
    if worst[0] > tol:
        return CheckResult("U.2", FAIL, {"agent": trajectory.agent, "range": worst[1], "residual": f"{worst[0]:.3e}"})
    return CheckResult("U.2", PASS, message="𝒰(t, t') 𝒰(t', t'') = 𝒰(t, t'')")


# --- U.3 ---

# Above this window dimension the slot factor is not compared operator by operator.
SLOT_FACTOR_LIMIT = 512
# pinv and two SVDs sit between the step and its slot factor.
SLOT_FACTOR_TOL = 1e-8


def _window_layout(builder: ScenarioBuilder, window: Sequence[ClockTuple]) -> DimLayout:
    return DimLayout.from_pairs([("clocks", len(window))]) + builder.body


def slot_factor_distance(
    before: np.ndarray, after: np.ndarray, u: np.ndarray, cut: Sequence[str], layout: DimLayout
) -> float | None:
    """Distance between the step's factor on `cut` and u, up to phase and scale.

    The step restricted to the reachable span is after @ pinv(before). It can only be read as
    a product when the span itself is one across the cut; otherwise None. A step that is not a
    product returns inf.
    """
    if layout.total_dim > SLOT_FACTOR_LIMIT:
        return None
    pinv = np.linalg.pinv(before, rcond=RANK_TOL)
    s_span, c_span, _ = operator_schmidt(before @ pinv, cut, layout)
    if schmidt_ratio(s_span) > RANK_TOL:
        return None
    s_step, c_step, _ = operator_schmidt(after @ pinv, cut, layout)
    if schmidt_ratio(s_step) > RANK_TOL:
        return float("inf")
    expected = np.asarray(u, dtype=complex) @ c_span[0]
    return phase_aligned_distance(c_step[0] / np.linalg.norm(c_step[0]), expected / np.linalg.norm(expected))


def check_time_of_action(
    builder: ScenarioBuilder,
    agent: int,
    t_star: int | None = None,
    samples: int | None = None,
    agent_ops: Sequence[np.ndarray] | None = None,
    seed: int | None = None,
    tol: float | None = None,
) -> CheckResult:
    """U.3 for one agent, by redrawing that agent's unitary `samples` times.

    At t ≠ t* one unitary, shared by every sample, has to carry the states at t-1 to those at t
    while acting as the identity on the agent's ancilla. At t* the step has to be U ⊗ Rest with
    a single Rest off the agent's slot, and where the reachable span is a product across the
    slot the step's slot factor is compared with U directly.
    """
    tol = resolve_tol(tol)
    samples = resolve_samples(samples)
    if not builder.has_slot(agent):
        return CheckResult("U.3", SKIP, message=f"{builder.name} has no operation slots")
    t_star = builder.times_of_action[agent] if t_star is None else t_star
    if t_star is None:
        return CheckResult("U.3", SKIP, message=f"no declared time of action for {builder.agents[agent]}")
    name = builder.agents[agent]
    T = builder.final_times[agent]
    if not 1 <= t_star <= T:
        return CheckResult("U.3", FAIL, {"agent": name, "time": t_star}, f"time of action outside [1, {T}]")
    rng = make_rng(seed)
    base = builder.resolve_ops(agent_ops)
    unitaries = [haar_unitary(builder.slot_dim(agent), rng) for _ in range(samples)]
    runs = [perspectival_states(builder, builder.with_op(base, agent, u), agent) for u in unitaries]
    undo = [builder.embed_agent(dagger(u), agent) for u in unitaries]
    slot = builder.slots[agent]
    compared = 0

    for t in range(1, T + 1):
        before = [run[t - 1] for run in runs]
        after = [run[t] for run in runs]
        if t == t_star:
            after = [[v.map_blocks(undo[s]) for v in states] for s, states in enumerate(after)]
        window = _window(*before, *after)
        if not window:
            continue
        layout = _window_layout(builder, window)
        b = np.column_stack([_stack(states, window) for states in before])
        a = np.column_stack([_stack(states, window) for states in after])
        cut = slot.labels if t == t_star else (slot.ancilla,)
        residual, rest = unitary_rest(b, a, cut, layout, tol)
        if rest is None:
            witness = {
                "agent": name,
                "time": t,
                "residual": f"{residual:.3e}",
                "gram_residual": f"{max_abs(gram(b) - gram(a)):.3e}",
            }
            if t == t_star:
                return CheckResult("U.3", FAIL, witness, "step is not the agent's operation ⊗ a shared rest")
            return CheckResult("U.3", FAIL, witness, f"step depends on the agent's operation or acts on {slot.ancilla}")
        if t != t_star:
            continue
        for s, u in enumerate(unitaries):
            distance = slot_factor_distance(
                _stack(before[s], window), _stack(runs[s][t], window), u, slot.labels, layout
            )
            if distance is None:
                break
            compared += 1
            if distance > max(tol, SLOT_FACTOR_TOL):
                witness = {"agent": name, "time": t, "distance": f"{distance:.3e}"}
                return CheckResult("U.3", FAIL, witness, "slot factor of the step differs from the agent's operation")
    witness = {"agent": name, "time_of_action": t_star, "slot_factor_compared": compared}
    return CheckResult("U.3", PASS, witness, f"{samples} samples")


# --- Affine-linearity ---


def affine_linearity_residual(
    fn: Callable[[np.ndarray], np.ndarray], a: np.ndarray, b: np.ndarray, c: np.ndarray
) -> float:
    """max |f(A+B-C) - f(A) - f(B) + f(C)|; zero for every affine f."""
    return max_abs(fn(a + b - c) - fn(a) - fn(b) + fn(c))


def check_affine_linearity(
    builder: ScenarioBuilder,
    agent_ops: Sequence[np.ndarray] | None,
    slot: int,
    seed: int | None = None,
    tol: float | None = None,
) -> CheckResult:
    """Every M_t must be affine in the operator placed in `slot`, others held fixed."""
    tol = resolve_tol(tol)
    if not builder.has_slot(slot):
        return CheckResult("affine-linearity", SKIP, message=f"{builder.name} has no operation slots")
    rng = make_rng(seed)
    base = builder.resolve_ops(agent_ops)
    d = builder.slot_dim(slot)
    a, b, c = (random_operator(d, rng) for _ in range(3))

    def branches(op: np.ndarray) -> dict[ClockTuple, np.ndarray]:
        return builder.branch_operators(builder.with_op(base, slot, op))

    mixed, ma, mb, mc = branches(a + b - c), branches(a), branches(b), branches(c)
    zero = np.zeros((builder.body_dim,) * 2, dtype=complex)
    worst, where = 0.0, None
    for t in sorted(set(mixed) | set(ma) | set(mb) | set(mc)):
        residual = max_abs(mixed.get(t, zero) - ma.get(t, zero) - mb.get(t, zero) + mc.get(t, zero))
        if residual > worst:
            worst, where = residual, t
    witness = {"agent": builder.agents[slot], "residual": f"{worst:.3e}"}
    if worst > tol:
        witness["tuple"] = where
        return CheckResult("affine-linearity", FAIL, witness, "a branch is not affine in this slot")
    return CheckResult("affine-linearity", PASS, witness)


# --- Declared unitaries and cross-checks ---


def check_candidate_unitaries(
    builder: ScenarioBuilder,
    agent_ops: Sequence[np.ndarray] | None,
    agent: int,
    tol: float | None = None,
) -> CheckResult:
    """The builder's own 𝒰(t, t-1), where declared, are unitary and map each state to the next."""
    tol = resolve_tol(tol)
    ops = builder.resolve_ops(agent_ops)
    states = perspectival_states(builder, ops, agent)
    checked = 0
    for t in range(1, len(states)):
        candidate = builder.candidate_unitary(agent, t, ops)
        if candidate is None:
            continue
        checked += 1
        witness = {"agent": builder.agents[agent], "time": t}
        if not candidate.is_unitary(tol):
            return CheckResult("declared-unitaries", FAIL, witness, "declared step is not unitary")
        residual = max(candidate.apply(v).distance(w) for v, w in zip(states[t - 1], states[t]))
        if residual > tol:
            witness["residual"] = f"{residual:.3e}"
            return CheckResult("declared-unitaries", FAIL, witness, "declared step misses the next state")
    if not checked:
        return CheckResult("declared-unitaries", SKIP, message="no declared steps")
    return CheckResult("declared-unitaries", PASS, {"agent": builder.agents[agent], "steps": checked})


def relate_perspectives(
    builder: ScenarioBuilder, agent_ops: Sequence[np.ndarray] | None, agent: int, t: int
) -> list[ClockVector]:
    """|ψ_X(t)⟩ rebuilt as N_t Σ |t_others⟩ ⊗ M_(t, t_others) |ψ⟩ for each physical input."""
    branches = builder.branch_operators(builder.resolve_ops(agent_ops))
    inputs = builder.physical_inputs()
    dims = builder.remaining_clock_dims(agent)
    n_op = builder.normalization(agent, t)
    out = []
    for i in range(inputs.shape[1]):
        blocks = {}
        for tup, m in branches.items():
            if tup[agent] == t:
                v = m @ inputs[:, i]
                if np.any(v != 0):
                    blocks[tup[:agent] + tup[agent + 1 :]] = v
        out.append(n_op.apply(ClockVector(dims, builder.body_dim, blocks)))
    return out


def matrices_from_trajectory(
    trajectory: PerspectivalTrajectory, builder: ScenarioBuilder
) -> dict[ClockTuple, np.ndarray]:
    """M_t on the physical inputs, read off as ⟨t_others| N_t⁻¹ 𝒰(t, 0) |ψ_X(0)⟩."""
    agent = trajectory.agent
    n_inputs = len(trajectory.states[0])
    current = trajectory.states[0]
    found: dict[ClockTuple, np.ndarray] = {}
    for t in range(trajectory.final_time + 1):
        if t:
            current = [trajectory.step_unitaries[t].apply(v) for v in current]
        n_inv = builder.normalization(agent, t).inverse()
        for i, v in enumerate(current):
            for rest, block in n_inv.apply(v).blocks.items():
                tup = _insert(rest, agent, t)
                if tup not in found:
                    found[tup] = np.zeros((builder.body_dim, n_inputs), dtype=complex)
                found[tup][:, i] = block
    return found


# --- Aggregate ---


def full_report(
    builder: ScenarioBuilder,
    agent_ops: Sequence[np.ndarray] | None = None,
    samples: int | None = None,
    seed: int | None = None,
    tol: float | None = None,
) -> AxiomReport:
    tol = resolve_tol(tol)
    report = AxiomReport(builder.name)
    report.results.extend(check_boundaries(builder, agent_ops, tol))
    report.results.extend(check_normalization(builder, agent_ops, seed, tol))

    u1, trajectories = check_unitary_evolution(builder, agent_ops, tol)
    report.results.append(u1)
    if not trajectories:
        report.results.append(CheckResult("U.2", SKIP, message="no agent has a unitary trajectory"))
    else:
        u2 = [check_composition(traj, tol) for traj in trajectories.values()]
        report.results.append(next((r for r in u2 if not r.passed), u2[0]))

    if not any(builder.has_slot(a) for a in range(builder.n_agents)):
        report.results.append(CheckResult("U.3", SKIP, message=f"{builder.name} has no operation slots"))
        report.results.append(CheckResult("affine-linearity", SKIP, message=f"{builder.name} has no operation slots"))
    else:
        u3 = [check_time_of_action(builder, a, None, samples, agent_ops, seed, tol) for a in range(builder.n_agents)]
        report.results.append(next((r for r in u3 if not r.passed), CheckResult("U.3", PASS, message="all agents")))
        affine = [check_affine_linearity(builder, agent_ops, a, seed, tol) for a in range(builder.n_agents)]
        report.results.append(
            next((r for r in affine if not r.passed), CheckResult("affine-linearity", PASS, message="every slot"))
        )

    declared = [check_candidate_unitaries(builder, agent_ops, a, tol) for a in range(builder.n_agents)]
    if any(r.status != SKIP for r in declared):
        failed = [r for r in declared if not r.passed]
        report.results.append(failed[0] if failed else CheckResult("declared-unitaries", PASS, message="all agents"))

    if report.passed:
        logger.info(f"✅ {builder.name}: every axiom holds")
    else:
        failed = [r.name for r in report.results if not r.passed]
        logger.info(f"{builder.name}: failed {', '.join(failed)}")
    return report
