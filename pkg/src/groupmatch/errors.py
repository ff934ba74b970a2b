"""Error types shared across the package.

Every raised error carries a short machine-readable ``code`` (e.g.
``"invalid-dataset"``) so the CLI can map failures onto exit codes and
tests can assert on the exact failure mode.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base error; ``code`` is a stable kebab-case identifier."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class ValidationError(EngineError):
    """Bad input data or configuration (CLI exit code 1)."""


class RuntimeFailure(EngineError):
    """Failure while computing (CLI exit code 2)."""
