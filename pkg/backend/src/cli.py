"""
Command-line entry point for QPuzzle Lab.

    python cli.py run --config configs/geom.json --out results [--verbose]
    python cli.py report --in results [--pdf]
    python cli.py schema [--out configs/experiment.schema.json]
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

SRC_DIR = Path(__file__).resolve().parent
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

env_path = SRC_DIR.parent / ".env.local"
if env_path.exists():
    load_dotenv(env_path)
else:
    load_dotenv()

from commands.command_parser import EXIT_SCHEMA, execute  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpuzzle-lab", description="One-way puzzle reduction lab")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="Run one experiment config")
    run.add_argument("--config", required=True, help="Experiment JSON config")
    run.add_argument("--out", default=None, help="Output directory (overrides the config's out)")
    run.add_argument("--verbose", action="store_true", help="Print a line per finished instance")

    report = sub.add_parser("report", help="Aggregate result rows")
    report.add_argument("--in", dest="in_dir", required=True, help="Directory of runner outputs")
    report.add_argument("--pdf", action="store_true", help="Also write report.pdf")

    schema = sub.add_parser("schema", help="Print or write the config JSON schema")
    schema.add_argument("--out", default=None)

    sub.add_parser("help", help="Show command help")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return the process exit code."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_SCHEMA if e.code else 0

    cmd_type = ns.command or "help"
    args = {k: v for k, v in vars(ns).items() if k != "command"}
    result = execute(cmd_type, args)

    if result["success"]:
        if cmd_type in ("help", "schema") and not args.get("out"):
            print(result["message"], end="")
        else:
            print(f"[CLI] {result['message'].rstrip()}")
    elif "error" in result:
        print(f"[CLI] Error: {result['error']}", file=sys.stderr)
    else:
        print(f"[CLI] {result['message']}")
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
