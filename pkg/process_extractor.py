"""
The process 𝒢(U_1 … U_N) a scenario induces, and the checks that make it a pure process.

A `ProcessFunction` is anything that turns one operator per agent into an operator on
S ⊗ S'; builders, the analytic switch and Lugano formulas and direct comb evaluation all
produce one, so they can be compared with `process_distance`.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from axiom_verifier import (
    FAIL,
    PASS,
    SKIP,
    CheckResult,
    UnitaryExistenceError,
    check_time_of_action,
    extract_step_unitaries,
)
from history_state import ScenarioBuilder, evolution_matrix
from scenario_builders import P0, P1, CombSpec, lugano_process
from settings import make_rng, resolve_samples, resolve_tol
from tensor_core import (
    DimensionMismatchError,
    DimLayout,
    embed,
    haar_unitary,
    is_hermitian,
    is_unitary,
    max_abs,
    partial_trace,
    phase_aligned_distance,
    random_operator,
    random_state,
    reduced_density,
)

logger = logging.getLogger(__name__)


class NonlinearChannelError(ValueError):
    """A channel handed to `choi` gave inconsistent answers on superposed inputs."""


@dataclass(frozen=True)
class ProcessFunction:
    """𝒢: one operator per agent slot ↦ operator on S ⊗ S'.

    `body` and `ancilla_labels` are optional; when present they name each slot's ancilla factor
    in the output layout so ancilla locality can be checked.
    """

    arity: int
    slot_dims: tuple[int, ...]
    fn: Callable[[Sequence[np.ndarray]], np.ndarray]
    name: str = "process"
    ancilla_dims: tuple[int, ...] | None = None
    body: DimLayout | None = None
    ancilla_labels: tuple[str, ...] | None = None

    def eval(self, ops: Sequence[np.ndarray]) -> np.ndarray:
        if len(ops) != self.arity:
            raise ValueError(f"{self.name} takes {self.arity} operators, got {len(ops)}")
        for i, (op, d) in enumerate(zip(ops, self.slot_dims)):
            if np.shape(op) != (d, d):
                raise DimensionMismatchError(f"Slot {i} of {self.name} needs ({d}, {d}), got {np.shape(op)}")
        return np.asarray(self.fn([np.asarray(op, dtype=complex) for op in ops]), dtype=complex)

    def __call__(self, *ops: np.ndarray) -> np.ndarray:
        return self.eval(ops)


@dataclass(frozen=True)
class ChoiMatrix:
    """Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|), input factor first."""

    matrix: np.ndarray
    in_dim: int
    out_dim: int

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def rank(self, tol: float = 1e-9) -> int:
        return int(np.sum(np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2) > tol))

    def is_hermitian(self, tol: float | None = None) -> bool:
        return is_hermitian(self.matrix, resolve_tol(tol))


# --- Extraction ---


def extract_process(builder: ScenarioBuilder, agent_ops: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """𝒢 = M at the all-final clock tuple."""
    return evolution_matrix(builder, agent_ops, tuple(builder.final_times))


def builder_process_function(builder: ScenarioBuilder) -> ProcessFunction:
    slots = [a for a in range(builder.n_agents) if builder.has_slot(a)]
    return ProcessFunction(
        arity=len(slots),
        slot_dims=tuple(builder.slot_dim(a) for a in slots),
        fn=lambda ops: extract_process(builder, ops),
        name=builder.name,
        ancilla_dims=tuple(builder.body.dim_of(builder.slots[a].ancilla) for a in slots),
        body=builder.body,
        ancilla_labels=tuple(builder.slots[a].ancilla for a in slots),
    )


def switch_process_function(target_dim: int = 2, ancilla_dims: Sequence[int] = (1, 1)) -> ProcessFunction:
    """|0⟩⟨0| ⊗ U_B U_A + |1⟩⟨1| ⊗ U_A U_B."""
    body = DimLayout.from_pairs(
        [("control", 2), ("target", target_dim), ("anc_A", ancilla_dims[0]), ("anc_B", ancilla_dims[1])]
    )

    def fn(ops: Sequence[np.ndarray]) -> np.ndarray:
        ua = embed(ops[0], ("target", "anc_A"), body)
        ub = embed(ops[1], ("target", "anc_B"), body)
        return embed(P0, ("control",), body) @ ub @ ua + embed(P1, ("control",), body) @ ua @ ub

    return ProcessFunction(
        2,
        tuple(target_dim * a for a in ancilla_dims),
        fn,
        "switch",
        tuple(ancilla_dims),
        body,
        ("anc_A", "anc_B"),
    )


def twin_process_function(
    v: np.ndarray, system_dims: Sequence[int] = (2, 2), ancilla_dims: Sequence[int] = (1, 1)
) -> ProcessFunction:
    """(1 ⊗ U_B) V (U_A ⊗ 1)."""
    s_a, s_b = system_dims
    body = DimLayout.from_pairs([("S_A", s_a), ("S_B", s_b), ("anc_A", ancilla_dims[0]), ("anc_B", ancilla_dims[1])])
    vv = embed(v, ("S_A", "S_B"), body)

    def fn(ops: Sequence[np.ndarray]) -> np.ndarray:
        return embed(ops[1], ("S_B", "anc_B"), body) @ vv @ embed(ops[0], ("S_A", "anc_A"), body)

    return ProcessFunction(
        2, (s_a * ancilla_dims[0], s_b * ancilla_dims[1]), fn, "twin", tuple(ancilla_dims), body, ("anc_A", "anc_B")
    )


def lugano_process_function(ancilla_dims: Sequence[int] = (1, 1, 1)) -> ProcessFunction:
    body = DimLayout.from_pairs(
        [("q_A", 2), ("q_B", 2), ("q_C", 2)] + [(f"anc_{a}", d) for a, d in zip("ABC", ancilla_dims)]
    )
    return ProcessFunction(
        3,
        tuple(2 * d for d in ancilla_dims),
        lambda ops: lugano_process(*ops),
        "lugano",
        tuple(ancilla_dims),
        body,
        ("anc_A", "anc_B", "anc_C"),
    )


def comb_process_function(combs: Sequence[CombSpec], ancilla_dims: Sequence[int] | None = None) -> ProcessFunction:
    """Σ_k |k⟩⟨k| ⊗ V_N U_π(N) … V_1 U_π(1) V_0, evaluated directly."""
    n = combs[0].n_agents
    s, e = combs[0].target_dim, combs[0].memory_dim
    ancilla_dims = tuple(ancilla_dims) if ancilla_dims is not None else (1,) * n
    labels = tuple(f"anc_A{m + 1}" for m in range(n))
    body = DimLayout.from_pairs(
        [("control", len(combs)), ("target", s), ("memory", e)] + list(zip(labels, ancilla_dims))
    )

    def fn(ops: Sequence[np.ndarray]) -> np.ndarray:
        total = np.zeros((body.total_dim,) * 2, dtype=complex)
        for k, comb in enumerate(combs):
            proj = np.zeros((len(combs),) * 2, dtype=complex)
            proj[k, k] = 1.0
            w = embed(comb.unitaries[0], ("target", "memory"), body)
            for m, agent in enumerate(comb.permutation):
                w = embed(ops[agent], ("target", labels[agent]), body) @ w
                w = embed(comb.unitaries[m + 1], ("target", "memory"), body) @ w
            total += embed(proj, ("control",), body) @ w
        return total

    return ProcessFunction(n, tuple(s * a for a in ancilla_dims), fn, "combs", ancilla_dims, body, labels)


# --- Pure-process checks ---


@dataclass
class PureProcessReport:
    name: str
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def verify_pure_process(
    p: ProcessFunction, samples: int | None = None, seed: int | None = None, tol: float | None = None
) -> PureProcessReport:
    """Unitarity, slot-wise linearity and ancilla locality over sampled unitaries."""
    tol = resolve_tol(tol)
    samples = resolve_samples(samples)
    rng = make_rng(seed)
    report = PureProcessReport(p.name)

    unitarity = CheckResult("unitarity", PASS, {"samples": samples})
    for s in range(samples):
        ops = [haar_unitary(d, rng) for d in p.slot_dims]
        g = p.eval(ops)
        if not is_unitary(g, tol):
            residual = max_abs(g.conj().T @ g - np.eye(g.shape[0]))
            unitarity = CheckResult("unitarity", FAIL, {"sample": s, "residual": f"{residual:.3e}"})
            break
    report.results.append(unitarity)

    linearity = CheckResult("multilinearity", PASS, {"samples": samples})
    for s in range(samples):
        ops = [haar_unitary(d, rng) for d in p.slot_dims]
        for slot, d in enumerate(p.slot_dims):
            a, b = random_operator(d, rng), random_operator(d, rng)
            c = complex(rng.standard_normal(), rng.standard_normal())

            def at(op: np.ndarray) -> np.ndarray:
                return p.eval([op if i == slot else u for i, u in enumerate(ops)])

            residual = max(max_abs(at(a + b) - at(a) - at(b)), max_abs(at(c * a) - c * at(a)))
            if residual > tol:
                linearity = CheckResult("multilinearity", FAIL, {"sample": s, "slot": slot, "residual": f"{residual:.3e}"})
                break
        if not linearity.passed:
            break
    report.results.append(linearity)

    report.results.append(_check_ancilla_locality(p, samples, rng, tol))
    if report.passed:
        logger.info(f"✅ {p.name}: pure process on {samples} samples")
    return report


def _check_ancilla_locality(p: ProcessFunction, samples: int, rng: np.random.Generator, tol: float) -> CheckResult:
    """G(..., u ⊗ w, ...) = (w on the slot's ancilla) G(..., u ⊗ 1, ...), with a reduced-state fingerprint."""
    if p.body is None or p.ancilla_labels is None or p.ancilla_dims is None:
        return CheckResult("ancilla-locality", SKIP, message="no ancilla layout declared")
    slots = [i for i, a in enumerate(p.ancilla_dims) if a > 1]
    if not slots:
        return CheckResult("ancilla-locality", SKIP, message="all ancillas are one-dimensional")
    for s in range(samples):
        ops = [haar_unitary(d, rng) for d in p.slot_dims]
        for slot in slots:
            a = p.ancilla_dims[slot]
            u = haar_unitary(p.slot_dims[slot] // a, rng)
            w = haar_unitary(a, rng)
            with_w = p.eval([np.kron(u, w) if i == slot else op for i, op in enumerate(ops)])
            without = p.eval([np.kron(u, np.eye(a)) if i == slot else op for i, op in enumerate(ops)])
            label = p.ancilla_labels[slot]
            residual = max_abs(with_w - embed(w, (label,), p.body) @ without)
            psi = random_state(p.body.total_dim, rng)
            rho_w = reduced_density(with_w @ psi, (label,), p.body)
            rho = reduced_density(without @ psi, (label,), p.body)
            residual = max(residual, max_abs(rho_w - w @ rho @ w.conj().T))
            if residual > tol:
                return CheckResult("ancilla-locality", FAIL, {"sample": s, "slot": slot, "residual": f"{residual:.3e}"})
    return CheckResult("ancilla-locality", PASS, {"slots": slots})


# --- Channels ---


def choi(
    channel: Callable[[np.ndarray], np.ndarray],
    in_dim: int,
    out_dim: int,
    seed: int | None = None,
    tol: float | None = None,
) -> ChoiMatrix:
    """Choi matrix of the pure map `channel` evaluated on basis vectors; vec stacks columns."""
    tol = resolve_tol(tol)
    rng = make_rng(seed)
    columns = []
    for i in range(in_dim):
        e = np.zeros(in_dim, dtype=complex)
        e[i] = 1.0
        out = np.asarray(channel(e), dtype=complex).reshape(-1)
        if out.shape != (out_dim,):
            raise DimensionMismatchError(f"Channel output has dimension {out.shape[0]}, expected {out_dim}")
        columns.append(out)
    k = np.column_stack(columns)
    psi = random_state(in_dim, rng)
    residual = max_abs(np.asarray(channel(psi), dtype=complex).reshape(-1) - k @ psi)
    if residual > tol * max(1.0, max_abs(k)):
        raise NonlinearChannelError(f"Channel output on a superposed input is off by {residual:.3e}")
    vec = k.reshape(-1, order="F")
    return ChoiMatrix(np.outer(vec, vec.conj()), in_dim, out_dim)


def trace_environment(
    process: np.ndarray, layout: DimLayout, environment: str, input_state: np.ndarray
) -> ChoiMatrix:
    """Choi matrix of ρ ↦ Tr_env[G (ρ ⊗ |ν⟩⟨ν|) G†] for a dilated comb with environment prepared in |ν⟩."""
    process = np.asarray(process, dtype=complex)
    if process.shape != (layout.total_dim, layout.total_dim):
        raise DimensionMismatchError(f"Process of shape {process.shape} does not match layout {layout.total_dim}")
    env_dim = layout.dim_of(environment)
    nu = np.asarray(input_state, dtype=complex).reshape(-1)
    if nu.shape != (env_dim,):
        raise DimensionMismatchError(f"Environment state has dimension {nu.shape[0]}, expected {env_dim}")
    rest = layout.without((environment,))
    pos = layout.index(environment)
    # Columns |i⟩_rest ⊗ |ν⟩_env placed in layout order.
    cols = np.eye(rest.total_dim, dtype=complex).reshape(rest.dims + (rest.total_dim,))
    cols = np.multiply.outer(cols, nu)
    cols = np.moveaxis(cols, -1, pos).reshape(layout.total_dim, rest.total_dim)
    k = process @ cols
    vec = k.reshape(-1, order="F")
    full = np.outer(vec, vec.conj())
    doubled = DimLayout.from_pairs([(f"in_{label}", d) for label, d in zip(rest.labels, rest.dims)]) + layout
    reduced = partial_trace(full, (environment,), doubled)
    return ChoiMatrix(reduced, rest.total_dim, rest.total_dim)


def process_distance(
    p1: ProcessFunction, p2: ProcessFunction, samples: int | None = None, seed: int | None = None
) -> float:
    """Max over sampled unitary tuples of the phase-aligned operator-norm distance."""
    if p1.arity != p2.arity or p1.slot_dims != p2.slot_dims:
        raise DimensionMismatchError(f"Slots differ: {p1.name} {p1.slot_dims} vs {p2.name} {p2.slot_dims}")
    samples = resolve_samples(samples)
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(samples):
        ops = [haar_unitary(d, rng) for d in p1.slot_dims]
        worst = max(worst, phase_aligned_distance(p1.eval(ops), p2.eval(ops)))
    return worst


# --- Causal reference frames ---


def causal_frame_decomposition_check(
    builder: ScenarioBuilder,
    agent: int,
    samples: int | None = None,
    agent_ops: Sequence[np.ndarray] | None = None,
    seed: int | None = None,
    tol: float | None = None,
) -> CheckResult:
    """𝒢 = Φ (U_X ⊗ 1) Π: past steps, the agent's action on top of an operation-free step, future steps.

    The step at t* is rebuilt with the agent's slot set to the identity and the agent's
    operation applied afterwards; running the whole chain must land on |T_others⟩ ⊗ 𝒢|ψ⟩.
    """
    tol = resolve_tol(tol)
    name = "causal-frame"
    if not builder.has_slot(agent):
        return CheckResult(name, SKIP, message=f"{builder.name} has no operation slots")
    u3 = check_time_of_action(builder, agent, samples=samples, agent_ops=agent_ops, seed=seed, tol=tol)
    if not u3.passed:
        return CheckResult(name, FAIL, u3.witness, f"time of action fails: {u3.message}")
    ops = builder.resolve_ops(agent_ops)
    t_star = builder.times_of_action[agent]
    try:
        traj = extract_step_unitaries(builder, ops, agent, tol=tol)
        idle = extract_step_unitaries(builder, builder.with_op(ops, agent, np.eye(builder.slot_dim(agent))), agent, tol=tol)
    except UnitaryExistenceError as e:
        return CheckResult(name, FAIL, {"agent": builder.agents[agent], "time": e.time}, str(e))

    vectors = traj.states[0]
    for t in range(1, t_star):
        vectors = [traj.step_unitaries[t].apply(v) for v in vectors]
    action = builder.embed_agent(ops[agent], agent)
    vectors = [idle.step_unitaries[t_star].apply(v).map_blocks(action) for v in vectors]
    for t in range(t_star + 1, traj.final_time + 1):
        vectors = [traj.step_unitaries[t].apply(v) for v in vectors]

    final_others = tuple(T for i, T in enumerate(builder.final_times) if i != agent)
    expected = extract_process(builder, ops) @ builder.physical_inputs()
    residual = 0.0
    for i, v in enumerate(vectors):
        stray = sum(np.linalg.norm(b) for t, b in v.blocks.items() if t != final_others)
        residual = max(residual, stray, float(np.linalg.norm(v.block(final_others) - expected[:, i])))
    witness = {"agent": builder.agents[agent], "time_of_action": t_star, "residual": f"{residual:.3e}"}
    if residual > tol:
        return CheckResult(name, FAIL, witness, "past, action and future do not compose to the process")
    return CheckResult(name, PASS, witness)
