"""
MCP tool server for chronoframe.

Run MCP server:
    uv run python server.py
    uv run python server.py --transport sse --port 8000
"""

import argparse
import logging
from typing import Any

from mcp.server.fastmcp import FastMCP
from starlette.requests import Request
from starlette.responses import HTMLResponse

from cli import RunOptions, run_verify
from process_extractor import extract_process as extract_matrix
from scenario_builders import desync_schedule as make_schedule
from scenario_config import ConfigError, build_scenario, parse_config
from settings import settings

logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

SCENARIO_DEFAULTS = {
    "twin": {"system_dims": [2, 2], "v": "required", "times_of_action": [2, 6]},
    "switch": {"target_dim": 2, "times_of_action": [4, 4]},
    "combs": {"target_dim": 2, "combs": "required", "time_of_action": "2N^2 + 6"},
    "lugano": {"agent_ops": ["identity"] * 3},
    "lugano-resync-attempt": {"agent_ops": ["identity"] * 3, "times_of_action": [4, 4, 4]},
    "feynman": {"gates": "required"},
}

mcp = FastMCP("chronoframe")


def _rows(m) -> list[list[list[float]]]:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


@mcp.tool()
def verify_scenario(config: dict[str, Any], seed: int | None = None, samples: int | None = None) -> dict[str, Any]:
    """
    Runs every axiom, pure-process and projector check on an inline scenario config.
    Returns 'passed' and the rendered 'report', or an 'error' key on failure.
    Stored-history configs need a dump file and are only available from the command line.
    """
    try:
        parsed = parse_config(config)
        if parsed.kind == "custom-history":
            return {"error": "custom-history configs are only supported by the command line"}
        report = run_verify(build_scenario(parsed), RunOptions(seed=seed, samples=samples))
        return {"passed": report.passed, "report": report.render()}
    except ConfigError as e:
        return {"error": f"Invalid config: {e}"}
    except ValueError as e:
        logger.error(f"verify_scenario failed: {e}", exc_info=True)
        return {"error": str(e)}


@mcp.tool()
def extract_process(config: dict[str, Any]) -> dict[str, Any]:
    """
    Returns the process matrix of a scenario as rows of [re, im] pairs.
    """
    try:
        scenario = build_scenario(parse_config(config))
        if scenario.builder is not None:
            matrix = extract_matrix(scenario.builder, scenario.agent_ops)
        elif scenario.process is not None:
            matrix = scenario.process.eval(scenario.agent_ops)
        else:
            return {"error": f"Scenario kind '{scenario.config.kind}' has no multi-agent process"}
        return {"name": scenario.name, "shape": list(matrix.shape), "matrix": _rows(matrix)}
    except ConfigError as e:
        return {"error": f"Invalid config: {e}"}
    except ValueError as e:
        logger.error(f"extract_process failed: {e}", exc_info=True)
        return {"error": str(e)}


@mcp.tool()
def desync_schedule(agents: int, permutation: list[int] | None = None) -> dict[str, Any]:
    """
    Returns T0, T1 and each agent's clock readings during the desynchronization steps.
    """
    try:
        schedule = make_schedule(agents, permutation if permutation is not None else list(range(agents)))
    except ValueError as e:
        return {"error": str(e)}
    return {
        "T0": schedule.T0,
        "T1": schedule.T1,
        "time_of_action": schedule.T0 + 2,
        "rows": schedule.rows(),
        "freeze_windows": [schedule.freeze_window(schedule.positions[a]) for a in range(agents)],
    }


@mcp.resource("chronoframe://scenarios")
def scenario_kinds() -> dict[str, Any]:
    """Scenario kinds and their default parameters."""
    return SCENARIO_DEFAULTS


@mcp.custom_route("/", methods=["GET"], include_in_schema=False)
async def root(request: Request) -> HTMLResponse:
    """Landing page for HTTP transports."""
    return HTMLResponse(
        """
        <html>
            <head><title>chronoframe</title></head>
            <body>
                <h1>✅ chronoframe server is running!</h1>
                <p>Tools: verify_scenario, extract_process, desync_schedule.</p>
                <p>SSE endpoint: <code>/sse</code></p>
            </body>
        </html>
        """
    )


def main() -> None:
    parser = argparse.ArgumentParser(description="Serve the chronoframe tools over MCP.")
    parser.add_argument("--transport", default="stdio", choices=["stdio", "sse", "streamable-http"])
    parser.add_argument("--host", default=None, help="Bind address; FASTMCP_HOST otherwise")
    parser.add_argument("--port", default=None, type=int, help="Bind port; FASTMCP_PORT otherwise")
    args = parser.parse_args()

    if args.host:
        mcp.settings.host = args.host
    if args.port:
        mcp.settings.port = args.port
    logger.info(f"Starting chronoframe server over {args.transport}")
    mcp.run(transport=args.transport)


if __name__ == "__main__":
    main()
