"""Exception types shared across the package."""

from __future__ import annotations


class FieldError(ValueError):
    """A value violates an invariant; ``field`` names the offending attribute."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(message)
        self.field = field


class ConfigError(ValueError):
    """Scenario configuration is invalid; ``path`` is a dotted key path."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message
