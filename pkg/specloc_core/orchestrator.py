import logging
from typing import Any, Dict, List, Optional, Tuple

from specloc_core.graph_nodes import RunState
from specloc_core.graph_builder import app as graph_app

log = logging.getLogger(__name__)


def run_command(
    args: Dict[str, Any],
    argv: Optional[List[str]] = None,
) -> Tuple[int, Optional[str], Dict[str, Any]]:
    """
    Run one CLI command through the pipeline.

    Returns (exit_code, output text or None, debug_state). On failure the
    structured error line is in debug_state["error"].
    """
    initial_state: RunState = {
        "argv": list(argv or []),
        "args": dict(args),
        "result": {},
        "output": None,
        "error": None,
        "exit_code": 0,
    }

    result = graph_app.invoke(initial_state)

    output = result.get("output")
    error = result.get("error")
    exit_code = int(result.get("exit_code") or 0)
    if error and exit_code == 0:
        exit_code = 2
    if error:
        log.debug("Command failed: %s", error)

    debug_state: Dict[str, Any] = {
        "config": result.get("config"),
        "problem": result.get("problem"),
        "notes": (result.get("result") or {}).get("notes"),
        "frame": (result.get("result") or {}).get("frame"),
        "error": error,
    }

    return exit_code, output, debug_state
