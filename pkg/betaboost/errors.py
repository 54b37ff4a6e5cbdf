"""
Exception types for betaboost.

Library code raises these; the CLI maps them to exit statuses.
"""

from __future__ import annotations

from typing import Optional


class BetaboostError(Exception):
    """Base class for all betaboost errors."""


class DomainError(BetaboostError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class TableFormatError(BetaboostError):
    """A table, network or data file is missing or malformed."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        lineno: Optional[int] = None,
    ):
        self.path = path
        self.lineno = lineno
        self.reason = message
        location = ""
        if path is not None:
            location = f"{path}"
            if lineno is not None:
                location += f":{lineno}"
            location += ": "
        elif lineno is not None:
            location = f"line {lineno}: "
        super().__init__(f"{location}{message}")


class ConvergenceWarning(UserWarning):
    """A Monte Carlo run stopped on its iteration budget."""
