"""
Command-line interface.

    chronoframe verify scenarios/switch.json --seed 7
    chronoframe extract scenarios/twin.json --out out/twin
    chronoframe schedule --agents 3 --perm 2 0 1
    chronoframe schedule --config scenarios/combs.json --k 1

Exit codes: 0 every check passed, 1 some check failed, 2 bad input.
"""

import argparse
import dataclasses
import json
import logging
import os
import re
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from axiom_verifier import FAIL, PASS, SKIP, AxiomReport, CheckResult, full_report
from constraint_projector import (
    constraint,
    exponential_identity_check,
    feynman_constraint_terms,
    feynman_history,
    feynman_projector,
    partial_product,
    physical_subspace,
    projector_block,
    span_histories,
)
from history_state import HistoryState
from process_extractor import choi, extract_process, verify_pure_process
from scenario_builders import DesyncSchedule, desync_schedule
from scenario_config import (
    ConfigError,
    Scenario,
    build_scenario,
    config_hash,
    load_config,
    normalization_entries,
)
from settings import make_rng, resolve_tol, settings
from tensor_core import DimLayout, is_hermitian, max_abs, random_state

__version__ = "0.1.0"

HISTORY_MAGIC = "chronoframe-history v1"
MATRIX_MAGIC = "chronoframe-matrix v1"

# Above these sizes the dense projector / Choi matrix is not built.
PROJECTOR_LIMIT = 2048
CHOI_LIMIT = 32

logger = logging.getLogger(__name__)


class DumpFormatError(ValueError):
    """A history or matrix dump could not be parsed."""

    def __init__(self, path: str, line: int, reason: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


# --- Dumps ---


def _format_vector(v: np.ndarray) -> str:
    return "[" + " ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in v) + "]"


def _parse_vector(text: str, path: str, lineno: int) -> np.ndarray:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise DumpFormatError(path, lineno, "vector must be enclosed in [ ]")
    values = []
    for entry in text[1:-1].split():
        try:
            re_part, im_part = entry.split(",")
            values.append(complex(float(re_part), float(im_part)))
        except ValueError:
            raise DumpFormatError(path, lineno, f"bad entry '{entry}', expected re,im") from None
    return np.array(values, dtype=complex)


def _header(config_id: str, seed: int | None) -> str:
    return f"# chronoframe {__version__} config={config_id} seed={seed if seed is not None else settings.SEED}"


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", encoding="utf-8", dir=path.parent, delete=False, suffix=".tmp") as fh:
        fh.write(text)
        tmp = fh.name
    os.replace(tmp, path)


def format_history_dump(
    histories: list[HistoryState], ancillas: tuple[str, ...] = (), config_id: str = "-", seed: int | None = None
) -> str:
    if not histories:
        raise ValueError("Nothing to dump")
    first = histories[0]
    lines = [HISTORY_MAGIC, _header(config_id, seed), "layout"]
    for label, dim in zip(first.clock_labels, first.clock_dims):
        lines.append(f"  clock {label} {dim}")
    for label, dim in zip(first.body.labels, first.body.dims):
        kind = "ancilla" if label in ancillas else "system"
        lines.append(f"  {kind} {label} {dim}")
    lines.append("final_times " + " ".join(str(T) for T in first.final_times))
    for i, hs in enumerate(histories):
        lines.append(f"input {i}")
        for t in hs.tuples:
            lines.append(f"t=({','.join(str(r) for r in t)}): {_format_vector(hs.branches[t])}")
    return "\n".join(lines) + "\n"


@dataclass
class HistoryDump:
    histories: list[HistoryState]
    ancillas: tuple[str, ...]
    header: str = ""


_TUPLE_LINE = re.compile(r"^t=\(([\d,\s]*)\):\s*(.*)$")


def parse_history_dump(text: str, path: str = "<dump>") -> HistoryDump:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HISTORY_MAGIC:
        raise DumpFormatError(path, 1, f"expected '{HISTORY_MAGIC}'")
    header = ""
    clocks: list[tuple[str, int]] = []
    body: list[tuple[str, int]] = []
    ancillas: list[str] = []
    final_times: tuple[int, ...] | None = None
    inputs: list[dict[tuple[int, ...], np.ndarray]] = []
    in_layout = False
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            header = header or line
            continue
        if line == "layout":
            in_layout = True
            continue
        if in_layout and raw.startswith("  "):
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("clock", "system", "ancilla") or not parts[2].isdigit():
                raise DumpFormatError(path, lineno, f"bad layout entry '{line}'")
            kind, label, dim = parts[0], parts[1], int(parts[2])
            if kind == "clock":
                clocks.append((label, dim))
            else:
                body.append((label, dim))
                if kind == "ancilla":
                    ancillas.append(label)
            continue
        in_layout = False
        if line.startswith("final_times"):
            try:
                final_times = tuple(int(x) for x in line.split()[1:])
            except ValueError:
                raise DumpFormatError(path, lineno, "final_times must be integers") from None
            continue
        if line.startswith("input"):
            inputs.append({})
            continue
        match = _TUPLE_LINE.match(line)
        if not match:
            raise DumpFormatError(path, lineno, f"unrecognized line '{line[:40]}'")
        if not inputs:
            raise DumpFormatError(path, lineno, "branch before any 'input' record")
        tup = tuple(int(r) for r in match.group(1).split(",") if r.strip())
        inputs[-1][tup] = _parse_vector(match.group(2), path, lineno)
    if final_times is None:
        raise DumpFormatError(path, len(lines), "missing final_times")
    if [T + 1 for T in final_times] != [d for _, d in clocks]:
        raise DumpFormatError(path, len(lines), f"final_times {final_times} disagree with clock dims")
    layout = DimLayout.from_pairs(body)
    labels = tuple(label for label, _ in clocks)
    histories = []
    for i, branches in enumerate(inputs):
        try:
            histories.append(HistoryState(labels, layout, final_times, branches))
        except ValueError as exc:
            raise DumpFormatError(path, len(lines), f"input {i}: {exc}") from exc
    return HistoryDump(histories, tuple(ancillas), header)


def read_history_dump(path: str | Path) -> HistoryDump:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DumpFormatError(str(path), 0, "file not found") from None
    return parse_history_dump(text, str(path))


def format_matrix_dump(name: str, m: np.ndarray, config_id: str = "-", seed: int | None = None) -> str:
    m = np.asarray(m, dtype=complex)
    lines = [MATRIX_MAGIC, _header(config_id, seed), f"name {name}", f"shape {m.shape[0]} {m.shape[1]}"]
    lines.extend(f"row: {_format_vector(row)}" for row in m)
    return "\n".join(lines) + "\n"


def parse_matrix_dump(text: str, path: str = "<dump>") -> tuple[str, np.ndarray]:
    lines = [line.strip() for line in text.splitlines()]
    if not lines or lines[0] != MATRIX_MAGIC:
        raise DumpFormatError(path, 1, f"expected '{MATRIX_MAGIC}'")
    name, shape, rows = "", None, []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line or line.startswith("#"):
            continue
        if line.startswith("name "):
            name = line[5:]
        elif line.startswith("shape "):
            try:
                shape = tuple(int(x) for x in line.split()[1:3])
            except ValueError:
                raise DumpFormatError(path, lineno, "shape must be two integers") from None
        elif line.startswith("row:"):
            rows.append(_parse_vector(line[4:], path, lineno))
        else:
            raise DumpFormatError(path, lineno, f"unrecognized line '{line[:40]}'")
    if shape is None:
        raise DumpFormatError(path, len(lines), "missing shape")
    if len(rows) != shape[0] or any(r.shape != (shape[1],) for r in rows):
        raise DumpFormatError(path, len(lines), f"rows do not match shape {shape}")
    return name, np.array(rows, dtype=complex).reshape(shape)


# --- Scenario loading ---


def load_scenario(path: str | Path) -> Scenario:
    """Config plus, for stored histories, the dump it points at (relative to the config file)."""
    path = Path(path)
    config = load_config(path)
    histories = None
    if config.kind == "custom-history":
        dump_path = Path(config.history_file)
        if not dump_path.is_absolute():
            dump_path = path.parent / dump_path
        dump = read_history_dump(dump_path)
        histories = dump.histories
        if not config.ancillas:
            config = config.model_copy(update={"ancillas": list(dump.ancillas)})
    return build_scenario(config, histories)


@dataclass
class RunOptions:
    tol: float | None = None
    seed: int | None = None
    samples: int | None = None

    def merged(self, scenario: Scenario) -> "RunOptions":
        """Command-line values win over the config file; unset ones fall back to settings later."""
        c = scenario.config
        return RunOptions(
            tol=self.tol if self.tol is not None else c.tol,
            seed=self.seed if self.seed is not None else c.seed,
            samples=self.samples if self.samples is not None else c.samples,
        )


# --- verify ---


def _prefixed(prefix: str, results: list[CheckResult]) -> list[CheckResult]:
    return [dataclasses.replace(r, name=f"{prefix}.{r.name}") for r in results]


def exponential_period(largest_final_time: int) -> int:
    """T for the exponential identity: the largest final time, but never below 2 (one term cannot cancel)."""
    return max(int(largest_final_time), 2)


def projector_checks(scenario: Scenario, opts: RunOptions) -> list[CheckResult]:
    """P̂_H is an orthogonal projector, Ĉ kills history states and the exponential identity holds."""
    builder = scenario.builder
    tol = resolve_tol(opts.tol)
    subspace = physical_subspace(builder, scenario.agent_ops)
    size = len(subspace.support) * subspace.body_dim
    if size > PROJECTOR_LIMIT:
        return [CheckResult("projector", SKIP, {"dimension": size}, f"support larger than {PROJECTOR_LIMIT}")]
    p = subspace.projector()
    residual = max_abs(p @ p - p)
    if not is_hermitian(p, tol) or residual > tol:
        return [CheckResult("projector", FAIL, {"idempotency": f"{residual:.3e}"})]
    results = [CheckResult("projector", PASS, {"rank": subspace.rank, "support": len(subspace.support)})]
    c = constraint(p, tol)
    psi = random_state(builder.body_dim, make_rng(opts.seed))
    hs = builder.construct(psi, scenario.agent_ops)
    killed = max_abs(c @ subspace.coordinates(hs))
    results.append(
        CheckResult("constraint", PASS if killed <= tol else FAIL, {"residual": f"{killed:.3e}"}, "Ĉ|Ψ⟩⟩ = 0")
    )
    T = exponential_period(max(builder.final_times))
    exp_residual = exponential_identity_check(c, T)
    results.append(
        CheckResult("exponential-identity", PASS if exp_residual <= tol else FAIL, {"T": T, "residual": f"{exp_residual:.3e}"})
    )
    return results


def feynman_checks(gates: list[np.ndarray], tol: float | None = None) -> list[CheckResult]:
    tol = resolve_tol(tol)
    T = len(gates)
    d = gates[0].shape[0]
    h = sum(feynman_constraint_terms(gates))
    worst = max(max_abs(h @ feynman_history(gates, e).to_dense()) for e in np.eye(d, dtype=complex))
    results = [CheckResult("wheeler-dewitt", PASS if worst <= tol else FAIL, {"residual": f"{worst:.3e}"})]

    p = feynman_projector(gates)
    block_residual = 0.0
    for t1 in range(T + 1):
        for t2 in range(t1, T + 1):
            expected = partial_product(gates, t1, t2) / (T + 1)
            block_residual = max(block_residual, max_abs(projector_block(p, t1, t2, T) - expected))
    results.append(
        CheckResult("projector-blocks", PASS if block_residual <= tol else FAIL, {"residual": f"{block_residual:.3e}"})
    )

    # The basis histories are orthonormal, so their span projector must coincide with Σ|Ψ⟩⟩⟨⟨Ψ|.
    subspace = span_histories([feynman_history(gates, e) for e in np.eye(d, dtype=complex)], "feynman")
    index = [t[0] * d + i for t in subspace.support for i in range(d)]
    span_residual = max_abs(subspace.projector() - p[np.ix_(index, index)])
    results.append(
        CheckResult("projector-span", PASS if span_residual <= tol else FAIL, {"residual": f"{span_residual:.3e}"})
    )

    period = exponential_period(T)
    exp_residual = exponential_identity_check(constraint(p, tol), period)
    results.append(
        CheckResult(
            "exponential-identity", PASS if exp_residual <= tol else FAIL, {"T": period, "residual": f"{exp_residual:.3e}"}
        )
    )
    return results


def run_verify(scenario: Scenario, opts: RunOptions) -> AxiomReport:
    opts = opts.merged(scenario)
    report = AxiomReport(scenario.name)
    if scenario.builder is not None:
        report.results.extend(
            full_report(scenario.builder, scenario.agent_ops, opts.samples, opts.seed, opts.tol).results
        )
    if scenario.process is not None:
        pure = verify_pure_process(scenario.process, opts.samples, opts.seed, opts.tol)
        report.results.extend(_prefixed("process", pure.results))
    if scenario.builder is not None:
        report.results.extend(projector_checks(scenario, opts))
    if scenario.gates is not None:
        report.results.extend(_prefixed("feynman", feynman_checks(scenario.gates, opts.tol)))
    return report


def cmd_verify(config_path: str, opts: RunOptions, report_path: str | None = None) -> int:
    try:
        scenario = load_scenario(config_path)
        report = run_verify(scenario, opts)
    except (ConfigError, DumpFormatError) as exc:
        logger.error(f"Cannot verify {config_path}: {exc}")
        print(f"[error] {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        logger.error(f"Verification of {config_path} aborted: {exc}", exc_info=True)
        print(f"[error] {exc}", file=sys.stderr)
        return 2
    text = report.render()
    print(text)
    target = report_path or scenario.config.output
    if target:
        write_atomic(target, text + "\n")
        logger.info(f"✅ Report written to {target}")
    return 0 if report.passed else 1


# --- extract ---


def cmd_extract(config_path: str, out_dir: str, opts: RunOptions) -> int:
    try:
        scenario = load_scenario(config_path)
    except (ConfigError, DumpFormatError) as exc:
        logger.error(f"Cannot extract from {config_path}: {exc}")
        print(f"[error] {exc}", file=sys.stderr)
        return 2
    opts = opts.merged(scenario)
    out = Path(out_dir)
    config_id = config_hash(scenario.config)
    seed = opts.seed

    if scenario.builder is not None:
        builder = scenario.builder
        process = extract_process(builder, scenario.agent_ops)
        histories = builder.construct_many(np.eye(builder.body_dim, dtype=complex), scenario.agent_ops)
        ancillas = builder.ancillas.labels
    elif scenario.gates is not None:
        d = scenario.gates[0].shape[0]
        process = partial_product(scenario.gates, 0, len(scenario.gates))
        histories = [feynman_history(scenario.gates, e) for e in np.eye(d, dtype=complex)]
        ancillas = ()
    else:
        process = scenario.process.eval(scenario.agent_ops)
        histories, ancillas = [], ()

    write_atomic(out / "process.txt", format_matrix_dump("process", process, config_id, seed))
    d = process.shape[0]
    if d <= CHOI_LIMIT:
        k = choi(lambda v: process @ v, d, d, seed, opts.tol)
        write_atomic(out / "choi.txt", format_matrix_dump("choi", k.matrix, config_id, seed))
    else:
        logger.warning(f"Skipping Choi matrix: dimension {d} exceeds {CHOI_LIMIT}")
    if histories:
        write_atomic(out / "histories.txt", format_history_dump(histories, ancillas, config_id, seed))
    if scenario.builder is not None:
        stored = {
            "kind": "custom-history",
            "name": f"{scenario.name}-stored",
            "history_file": "histories.txt",
            "ancillas": list(ancillas),
            "normalization": normalization_entries(scenario.builder),
            "times_of_action": list(scenario.builder.times_of_action),
            "seed": seed,
        }
        write_atomic(out / "custom-history.json", json.dumps(stored, indent=2) + "\n")
    logger.info(f"✅ Extracted {scenario.name} into {out}")
    return 0


# --- schedule ---


def render_schedule(schedule: DesyncSchedule, k: int | None = None) -> str:
    """One row per agent; frozen readings are starred."""
    head = f"agents={schedule.n_agents} permutation={list(schedule.permutation)} T0={schedule.T0} T1={schedule.T1}"
    lines = [
        head if k is None else f"k={k} {head}",
        "j      " + " ".join(f"{j:>4}" for j in range(schedule.T0 + 1)),
    ]
    for agent, row in enumerate(schedule.rows()):
        m = schedule.positions[agent]
        window = schedule.freeze_window(m)
        cells = []
        for j, r in enumerate(row):
            frozen = window is not None and window[0] < j <= window[1]
            cells.append(f"{r:>3}" + ("*" if frozen else " "))
        lines.append(f"A{agent + 1}(m={m}) " + " ".join(cells))
    return "\n".join(lines)


def schedule_permutation(config_path: str, k: int) -> list[int]:
    """π_k of comb k in a combs scenario."""
    config = load_config(config_path)
    if config.kind != "combs" or not config.combs:
        raise ConfigError(f"{config_path}: schedules need a 'combs' scenario, got '{config.kind}'")
    if not 0 <= k < len(config.combs):
        raise ConfigError(f"--k {k} outside 0..{len(config.combs) - 1}")
    return list(config.combs[k].permutation)


def cmd_schedule(
    n_agents: int | None,
    k: int | None = None,
    permutation: list[int] | None = None,
    config_path: str | None = None,
) -> int:
    try:
        if config_path is not None:
            if permutation is not None:
                raise ConfigError("--perm and --config are mutually exclusive")
            permutation = schedule_permutation(config_path, k or 0)
            if n_agents is not None and n_agents != len(permutation):
                raise ConfigError(f"--agents {n_agents} disagrees with the {len(permutation)} agents of comb {k or 0}")
            n_agents = len(permutation)
        if n_agents is None:
            raise ConfigError("--agents is required without --config")
        perm = permutation if permutation is not None else list(range(n_agents))
        schedule = desync_schedule(n_agents, perm)
    except ValueError as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return 2
    print(render_schedule(schedule, k))
    return 0


# --- Entry point ---


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="Numerical tolerance")
    common.add_argument("--seed", type=int, default=None, help="Random seed")
    common.add_argument("--samples", type=int, default=None, help="Random unitary samples per check")

    parser = argparse.ArgumentParser(prog="chronoframe", description="Multi-clock history states")
    parser.add_argument("--version", action="version", version=f"chronoframe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", parents=[common], help="Run every check on a scenario config")
    verify.add_argument("config")
    verify.add_argument("--report", default=None, help="Write the report here")

    extract = sub.add_parser("extract", parents=[common], help="Dump process, Choi matrix and histories")
    extract.add_argument("config")
    extract.add_argument("--out", required=True, help="Output directory")

    schedule = sub.add_parser("schedule", help="Print a desynchronization schedule")
    schedule.add_argument("--agents", type=int, default=None)
    schedule.add_argument("--k", type=int, default=None, help="Comb index; with --config it picks π_k")
    schedule.add_argument("--perm", type=int, nargs="+", default=None)
    schedule.add_argument("--config", default=None, help="Combs scenario to take π_k from")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=settings.LOG_LEVEL)
    if args.command == "schedule":
        return cmd_schedule(args.agents, args.k, args.perm, args.config)
    if args.samples is not None and args.samples < 1:
        print(f"[error] --samples must be positive, got {args.samples}", file=sys.stderr)
        return 2
    opts = RunOptions(args.tol, args.seed, args.samples)
    if args.command == "verify":
        return cmd_verify(args.config, opts, args.report)
    return cmd_extract(args.config, args.out, opts)


if __name__ == "__main__":
    sys.exit(main())
