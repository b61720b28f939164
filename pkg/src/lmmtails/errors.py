"""Exception hierarchy.

Each class carries the machine-readable code the command line prints on
failure.
"""

from __future__ import annotations


class LMMError(Exception):
    code = "E_DOMAIN"


class DomainError(LMMError, ValueError):
    """Input outside the domain where a quantity is defined."""

    code = "E_DOMAIN"


class NotACorrelationMatrixError(DomainError):
    def __init__(self, message: str, eigenvalue: float | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class StateError(DomainError):
    """A path lacks live values needed by the requested operation."""


class InsufficientDataError(DomainError):
    pass


class BracketNotFoundError(LMMError):
    code = "E_BRACKET"


class ConfigError(LMMError, ValueError):
    code = "E_CONFIG"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class CheckFailed(LMMError):
    code = "E_CHECK_FAIL"
