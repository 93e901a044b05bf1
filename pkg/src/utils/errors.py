"""
Exception hierarchy for the Rellich verification lab
"""


class LabError(Exception):
    """Base class for every error raised by the lab."""


class ConfigError(LabError, ValueError):
    """
    Invalid configuration or command line input.

    Args:
        message (str): Human readable description
        field (str, optional): Name of the offending configuration key
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class FieldParameterError(ConfigError):
    """Test-function parameters violate a family constraint."""


class DimensionError(ConfigError):
    """Dimension outside the range an operator or suite admits."""


class EvaluationError(LabError, ArithmeticError):
    """
    Domain violation or non-finite value during field evaluation.

    Args:
        message (str): Human readable description
        operation (str): Elementary operation or stage that failed
        location (optional): Coordinates of the offending node
    """

    def __init__(self, message, operation, location=None):
        super().__init__(message)
        self.operation = operation
        self.location = location

    def at(self, location):
        """Return a copy of this error tagged with a node location."""
        return EvaluationError(
            f"{self} (at x={list(location)})", self.operation, location
        )


class OperatorOrderError(LabError, ValueError):
    """Operator expression exceeds the admissible differential order."""


class QuadratureError(LabError, RuntimeError):
    """Rule construction or integration failed."""
