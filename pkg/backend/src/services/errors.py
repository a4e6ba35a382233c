"""
Error kinds shared by the services.

Each kind maps to one CLI exit code (see commands/command_parser.py).
"""


class QubitCapExceeded(ValueError):
    """Raised when a register would exceed MAX_QUBITS."""


class UndefinedSupportError(ValueError):
    """Raised when an oracle is queried on a prefix with zero mass."""

    def __init__(self, prefix: str):
        super().__init__(f"Prefix '{prefix}' has zero mass; conditional is undefined")
        self.prefix = prefix


class InfeasibleNoiseError(ValueError):
    """Raised when a noise budget cannot be realized on the given distribution."""


class DegenerateQueryError(RuntimeError):
    """Raised when both key-bit probability queries come back as zero."""


class MalformedRowsError(ValueError):
    """Raised when result rows fail validation; carries the offending line numbers."""

    def __init__(self, path: str, line_numbers: list):
        shown = ", ".join(str(n) for n in line_numbers[:10])
        super().__init__(f"Malformed rows in {path} at line(s): {shown}")
        self.path = path
        self.line_numbers = line_numbers


class SchemaConflictError(ValueError):
    """Raised when result files with different schema versions are aggregated."""


class ConfigError(ValueError):
    """Raised when an experiment config is unreadable or violates the schema."""
