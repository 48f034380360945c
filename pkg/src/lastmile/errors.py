"""Exception types shared across the package."""
from __future__ import annotations


class ConfigError(ValueError):
    """Invalid run configuration; the message lists every violation found."""

    def __init__(self, violations: list[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class OrderStateError(RuntimeError):
    """An order was asked to make a lifecycle transition its state forbids."""


class InfeasibleActionError(RuntimeError):
    """A policy action violates a hard constraint the caller should have masked."""


class TripRejected(RuntimeError):
    """A trip plan failed validation; carries the full violation list."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InvariantViolation(AssertionError):
    """A bookkeeping identity failed; always indicates a bug, never bad input."""
