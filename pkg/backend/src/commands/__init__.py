"""Commands module for parsing and executing harness commands."""

from .command_parser import execute, execute_command, exit_code_for, get_help_text, parse_command

__all__ = ["execute", "execute_command", "exit_code_for", "get_help_text", "parse_command"]
