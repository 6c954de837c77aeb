"""Shared exception types."""


class NumericalError(RuntimeError):
    """A numerical check failed: lost positivity, failed self-test, or a
    quantity that should be tiny came out large."""
