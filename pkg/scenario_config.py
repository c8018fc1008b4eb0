"""
Scenario configuration files.

A config is a JSON document, e.g.

    {
      "kind": "switch",
      "target_dim": 2,
      "ancilla_dims": [1, 1],
      "agent_ops": ["pauli-x", {"random": 7}],
      "seed": 11
    }

Operators are a named gate (identity, pauli-x, pauli-y, pauli-z, hadamard), `{"random": seed}`
for a Haar unitary, or a row-major matrix whose entries are numbers or [re, im] pairs.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from history_state import HistoryState, ScenarioBuilder
from normalization import NormalizationOperator
from process_extractor import ProcessFunction, builder_process_function, lugano_process_function
from scenario_builders import (
    HADAMARD,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    CombSpec,
    build_controlled_combs,
    build_custom_history,
    build_lugano_resync_attempt,
    build_switch,
    build_twin,
    fixed_order_comb,
)
from tensor_core import haar_unitary

logger = logging.getLogger(__name__)

ScenarioKind = Literal["twin", "switch", "combs", "lugano", "lugano-resync-attempt", "feynman", "custom-history"]

NAMED_GATES: dict[str, np.ndarray | None] = {
    "identity": None,
    "pauli-x": PAULI_X,
    "pauli-y": PAULI_Y,
    "pauli-z": PAULI_Z,
    "hadamard": HADAMARD,
}


class ConfigError(ValueError):
    """Invalid scenario config; the message names the offending field."""


class RandomGate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    random: int


Entry = float | tuple[float, float]
OperatorSpec = str | RandomGate | list[list[Entry]]


class CombConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    permutation: list[int]
    unitaries: list[OperatorSpec] | None = None
    memory_dim: int = Field(default=1, ge=1)


class NormalizationBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    clock_tuple: list[int]
    matrix: list[list[Entry]]


class NormalizationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    agent: int
    time: int
    default: list[list[Entry]] | None = None
    blocks: list[NormalizationBlock] = Field(default_factory=list)


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: ScenarioKind
    name: str | None = None
    # twin: [dim S_A, dim S_B]
    system_dims: list[int] | None = None
    # switch, combs, lugano: dimension of the shared target
    target_dim: int = Field(default=2, ge=1)
    ancilla_dims: list[int] | None = None
    agent_ops: list[OperatorSpec] | None = None
    v: OperatorSpec | None = None
    combs: list[CombConfig] | None = None
    gates: list[OperatorSpec] | None = None
    history_file: str | None = None
    ancillas: list[str] = Field(default_factory=list)
    normalization: list[NormalizationConfig] = Field(default_factory=list)
    times_of_action: list[int | None] | None = None
    samples: int | None = Field(default=None, ge=1)
    seed: int | None = None
    tol: float | None = Field(default=None, gt=0)
    output: str | None = None

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "ScenarioConfig":
        required = {
            "twin": ["v"],
            "combs": ["combs"],
            "feynman": ["gates"],
            "custom-history": ["history_file"],
        }
        for name in required.get(self.kind, []):
            if getattr(self, name) is None:
                raise ValueError(f"'{name}' is required for kind '{self.kind}'")
        if self.ancilla_dims is not None and any(d < 1 for d in self.ancilla_dims):
            raise ValueError(f"ancilla_dims must be positive, got {self.ancilla_dims}")
        return self


def _field_path(loc: tuple) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_config(data: dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(f"{_field_path(first['loc'])}: {first['msg']}") from exc


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"Config file not found at '{path}'") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(data)


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


# --- Operators ---


def parse_matrix(rows: list[list[Entry]], where: str) -> np.ndarray:
    try:
        m = np.array([[complex(*e) if isinstance(e, (tuple, list)) else complex(e) for e in row] for row in rows])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: entries must be numbers or [re, im] pairs") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{where}: matrix must be square, got shape {m.shape}")
    return m


def resolve_operator(spec: OperatorSpec, system_dim: int, ancilla_dim: int | None, where: str) -> np.ndarray:
    """Operator on (slot system) ⊗ (ancilla); ancilla defaults to the slot's system dimension."""
    if isinstance(spec, list):
        m = parse_matrix(spec, where)
        if m.shape[0] % system_dim:
            raise ConfigError(f"{where}: dimension {m.shape[0]} is not a multiple of the slot dimension {system_dim}")
        if ancilla_dim is not None and m.shape[0] != system_dim * ancilla_dim:
            raise ConfigError(f"{where}: dimension {m.shape[0]} does not match slot {system_dim} x ancilla {ancilla_dim}")
        return m
    anc = system_dim if ancilla_dim is None else ancilla_dim
    if isinstance(spec, RandomGate):
        return haar_unitary(system_dim * anc, np.random.default_rng(spec.random))
    if spec not in NAMED_GATES:
        raise ConfigError(f"{where}: unknown gate '{spec}'; known gates are {sorted(NAMED_GATES)}")
    gate = NAMED_GATES[spec]
    if gate is None:
        return np.eye(system_dim * anc, dtype=complex)
    if gate.shape[0] != system_dim:
        raise ConfigError(f"{where}: '{spec}' acts on a qubit, the slot has dimension {system_dim}")
    return np.kron(gate, np.eye(anc))


def _ancilla(config: ScenarioConfig, agent: int) -> int | None:
    if config.ancilla_dims is None:
        return None
    if agent >= len(config.ancilla_dims):
        raise ConfigError(f"ancilla_dims: no entry for agent {agent}")
    return config.ancilla_dims[agent]


def _agent_ops(config: ScenarioConfig, slot_dims: list[int], default: OperatorSpec = "identity") -> list[np.ndarray]:
    specs = config.agent_ops if config.agent_ops is not None else [default] * len(slot_dims)
    if len(specs) != len(slot_dims):
        raise ConfigError(f"agent_ops: expected {len(slot_dims)} operators, got {len(specs)}")
    return [
        resolve_operator(spec, d, _ancilla(config, i), f"agent_ops.{i}")
        for i, (spec, d) in enumerate(zip(specs, slot_dims))
    ]


# --- Scenarios ---


@dataclass
class Scenario:
    """What a config describes: a builder, a bare process, or a single-clock circuit."""

    config: ScenarioConfig
    builder: ScenarioBuilder | None = None
    process: ProcessFunction | None = None
    agent_ops: list[np.ndarray] | None = None
    gates: list[np.ndarray] | None = None

    @property
    def name(self) -> str:
        return self.config.name or self.config.kind


def _normalization_table(config: ScenarioConfig) -> dict[tuple[int, int], NormalizationOperator]:
    table = {}
    for i, entry in enumerate(config.normalization):
        where = f"normalization.{i}"
        default = parse_matrix(entry.default, f"{where}.default") if entry.default is not None else None
        blocks = {tuple(b.clock_tuple): parse_matrix(b.matrix, f"{where}.blocks.{j}") for j, b in enumerate(entry.blocks)}
        dims = {m.shape[0] for m in blocks.values()} | ({default.shape[0]} if default is not None else set())
        if len(dims) != 1:
            raise ConfigError(f"{where}: blocks must share one dimension, got {sorted(dims)}")
        table[(entry.agent, entry.time)] = NormalizationOperator(entry.agent, entry.time, dims.pop(), blocks, default)
    return table


def build_scenario(config: ScenarioConfig, histories: list[HistoryState] | None = None) -> Scenario:
    """Turn a validated config into builders and operators.

    Custom histories are read by the caller (they live in a dump file) and passed in.
    """
    kind = config.kind
    s = config.target_dim
    if kind == "twin":
        s_a, s_b = config.system_dims or (2, 2)
        ops = _agent_ops(config, [s_a, s_b])
        v = resolve_operator(config.v, s_a * s_b, 1, "v")
        builder = build_twin(ops[0], ops[1], v, (s_a, s_b))
        return Scenario(config, builder, builder_process_function(builder), ops)
    if kind == "switch":
        ops = _agent_ops(config, [s, s])
        builder = build_switch(ops[0], ops[1], s)
        return Scenario(config, builder, builder_process_function(builder), ops)
    if kind == "combs":
        combs = []
        for k, comb in enumerate(config.combs):
            n = len(comb.permutation)
            if comb.unitaries is None:
                combs.append(fixed_order_comb(comb.permutation, None, s, comb.memory_dim))
                continue
            unitaries = [
                resolve_operator(u, s * comb.memory_dim, 1, f"combs.{k}.unitaries.{j}") for j, u in enumerate(comb.unitaries)
            ]
            if len(unitaries) != n + 1:
                raise ConfigError(f"combs.{k}.unitaries: expected {n + 1} gates, got {len(unitaries)}")
            combs.append(CombSpec(tuple(comb.permutation), tuple(unitaries), comb.memory_dim))
        n = len(config.combs[0].permutation)
        ops = _agent_ops(config, [s] * n)
        try:
            builder = build_controlled_combs(combs, ops)
        except ValueError as exc:
            raise ConfigError(f"combs: {exc}") from exc
        return Scenario(config, builder, builder_process_function(builder), ops)
    if kind == "lugano":
        ops = _agent_ops(config, [2, 2, 2])
        process = lugano_process_function([op.shape[0] // 2 for op in ops])
        return Scenario(config, None, process, ops)
    if kind == "lugano-resync-attempt":
        ops = _agent_ops(config, [2, 2, 2])
        builder = build_lugano_resync_attempt(*ops)
        return Scenario(config, builder, builder_process_function(builder), ops)
    if kind == "feynman":
        if not config.gates:
            raise ConfigError("gates: at least one gate is required")
        d = config.system_dims[0] if config.system_dims else s
        gates = [resolve_operator(g, d, 1, f"gates.{i}") for i, g in enumerate(config.gates)]
        return Scenario(config, gates=gates)
    if kind == "custom-history":
        if not histories:
            raise ConfigError("history_file: no histories loaded")
        try:
            builder = build_custom_history(histories, _normalization_table(config), config.times_of_action, config.ancillas)
        except ValueError as exc:
            raise ConfigError(f"history_file: {exc}") from exc
        return Scenario(config, builder, builder_process_function(builder), [])
    raise ConfigError(f"kind: unsupported scenario kind '{kind}'")


def normalization_entries(builder: ScenarioBuilder) -> list[dict[str, Any]]:
    """Every non-identity normalization of a builder, in config form."""

    def rows(m: np.ndarray) -> list[list[list[float]]]:
        return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]

    entries = []
    for agent in range(builder.n_agents):
        for t in range(builder.final_times[agent] + 1):
            n_op = builder.normalization(agent, t)
            if n_op.is_identity():
                continue
            entry: dict[str, Any] = {"agent": agent, "time": t}
            if n_op.default is not None:
                entry["default"] = rows(n_op.default)
            entry["blocks"] = [{"clock_tuple": list(k), "matrix": rows(m)} for k, m in n_op.blocks.items()]
            entries.append(entry)
    return entries
