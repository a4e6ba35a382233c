"""
Command Parser for the experiment harness.

Parses command strings and routes them to the runner, the report aggregator
or the schema export. Every outcome, including failures, comes back as a
result dictionary carrying the process exit code.
"""

import json
import shlex
from typing import Any, Dict, Tuple

from services.errors import (
    ConfigError,
    DegenerateQueryError,
    InfeasibleNoiseError,
    MalformedRowsError,
    QubitCapExceeded,
    SchemaConflictError,
)

EXIT_OK = 0
EXIT_VERDICT_FAIL = 1
EXIT_SCHEMA = 2
EXIT_INFEASIBLE_NOISE = 3
EXIT_QUBIT_CAP = 4
EXIT_MALFORMED_ROWS = 5
EXIT_RUNTIME = 6

# Checked in order; subclasses before their bases.
ERROR_EXIT_CODES = (
    (ConfigError, EXIT_SCHEMA),
    (InfeasibleNoiseError, EXIT_INFEASIBLE_NOISE),
    (QubitCapExceeded, EXIT_QUBIT_CAP),
    (MalformedRowsError, EXIT_MALFORMED_ROWS),
    (SchemaConflictError, EXIT_MALFORMED_ROWS),
    (DegenerateQueryError, EXIT_RUNTIME),
)


def exit_code_for(error: Exception) -> int:
    for kind, code in ERROR_EXIT_CODES:
        if isinstance(error, kind):
            return code
    return EXIT_RUNTIME


def parse_command(command: str) -> Tuple[str, Dict[str, Any]]:
    """
    Parse a command string and return command type and arguments.

    Args:
        command: Command string (e.g., "run configs/geom.json --out results", "report results --pdf")

    Returns:
        Tuple of (command_type, arguments_dict)
    """
    try:
        parts = shlex.split(command.strip())
    except ValueError as e:
        return ("invalid", {"error": str(e)})

    if not parts:
        return ("help", {})

    command_type = parts[0].lower()
    args = parts[1:]

    if command_type == "run":
        return parse_run_command(args)
    elif command_type == "report":
        return parse_report_command(args)
    elif command_type == "schema":
        return ("schema", {"out": args[0] if args else None})
    elif command_type == "help":
        return ("help", {})
    else:
        return ("unknown", {"command": command_type})


def parse_run_command(args: list) -> Tuple[str, Dict[str, Any]]:
    """Parse `run <config> [--out <dir>] [--verbose]`."""
    config, out, verbose = None, None, False
    rest = list(args)
    while rest:
        token = rest.pop(0)
        if token == "--verbose":
            verbose = True
        elif token == "--out":
            if not rest:
                return ("invalid", {"error": "--out needs a directory"})
            out = rest.pop(0)
        elif token == "--config":
            if not rest:
                return ("invalid", {"error": "--config needs a file"})
            config = rest.pop(0)
        elif config is None:
            config = token
        else:
            return ("invalid", {"error": f"Unexpected argument: '{token}'"})
    if config is None:
        return ("invalid", {"error": "run needs a config file"})
    return ("run", {"config": config, "out": out, "verbose": verbose})


def parse_report_command(args: list) -> Tuple[str, Dict[str, Any]]:
    """Parse `report <dir> [--pdf]`."""
    pdf = "--pdf" in args
    rest = [a for a in args if a != "--pdf"]
    if rest and rest[0] == "--in":
        rest = rest[1:]
    if len(rest) != 1:
        return ("invalid", {"error": "report needs exactly one input directory"})
    return ("report", {"in_dir": rest[0], "pdf": pdf})


def get_help_text() -> str:
    """Get help text for available commands."""
    return """
Available Commands:

run <config.json> [--out dir] [--verbose]
                                - Run one experiment and write rows + summary
report <dir> [--pdf]            - Aggregate every row file in a directory
schema [path]                   - Print or write the config JSON schema
help                            - Show this help message

Exit codes: 0 ok, 1 verdict fail, 2 schema violation, 3 infeasible noise,
4 qubit cap exceeded, 5 malformed report rows, 6 runtime failure
"""


def execute(cmd_type: str, args: Dict[str, Any]) -> Dict[str, Any]:
    """
    Execute a parsed command and return results.

    Returns:
        Dictionary with type, success, exit_code and data or error
    """
    from experiments import experiment_config, experiment_runner
    from services import analytics_service

    try:
        if cmd_type == "run":
            config = experiment_config.load_config(args["config"])
            result = experiment_runner.run_experiment(config, args.get("out"), args.get("verbose", False))
            passed = result["summary"]["verdict"] == "pass"
            return {
                "type": "run",
                "data": result,
                "success": passed,
                "exit_code": EXIT_OK if passed else EXIT_VERDICT_FAIL,
                "message": f"{config.experiment}: {result['summary']['verdict']}"
            }

        elif cmd_type == "report":
            result = analytics_service.build_report(args["in_dir"], args.get("pdf", False))
            return {
                "type": "report",
                "data": result,
                "success": True,
                "exit_code": EXIT_OK,
                "message": result["text"]
            }

        elif cmd_type == "schema":
            schema = json.dumps(experiment_config.config_schema(), indent=2, sort_keys=True) + "\n"
            out = args.get("out")
            if out:
                with open(out, "w", encoding="utf-8", newline="\n") as f:
                    f.write(schema)
            return {
                "type": "schema",
                "data": schema,
                "success": True,
                "exit_code": EXIT_OK,
                "message": f"Schema written to: {out}" if out else schema
            }

        elif cmd_type == "help":
            return {
                "type": "help",
                "data": get_help_text(),
                "success": True,
                "exit_code": EXIT_OK,
                "message": get_help_text()
            }

        elif cmd_type == "unknown":
            return {
                "type": "error",
                "error": f"Unknown command: '{args.get('command', '')}'. Available commands: run, report, schema, help",
                "success": False,
                "exit_code": EXIT_SCHEMA
            }

        else:
            return {
                "type": "error",
                "error": args.get("error", f"Command not recognized: {cmd_type}"),
                "success": False,
                "exit_code": EXIT_SCHEMA
            }

    except Exception as e:
        return {
            "type": "error",
            "error": f"{type(e).__name__}: {str(e)}",
            "success": False,
            "exit_code": exit_code_for(e)
        }


def execute_command(command: str) -> Dict[str, Any]:
    """Parse a command string and execute it."""
    cmd_type, args = parse_command(command)
    return execute(cmd_type, args)
