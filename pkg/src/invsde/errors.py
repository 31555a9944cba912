"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class InvsdeError(Exception):
    """Base class for every error raised by this package."""


class ExprError(InvsdeError):
    pass


class LexError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, expected=frozenset()):
        detail = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")
        self.offset = offset
        self.expected = expected


class BindingError(ExprError):
    pass


class EvaluationError(ExprError, ArithmeticError):
    """Domain violation while evaluating; ``node`` is the offending subtree."""

    def __init__(self, message: str, node=None):
        where = f" in '{node}'" if node is not None else ""
        super().__init__(f"{message}{where}")
        self.node = node


class GeometryError(InvsdeError):
    pass


class DimensionError(GeometryError, ValueError):
    pass


class DegenerateBasisError(GeometryError):
    def __init__(self, message: str, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class ZeroGradientError(GeometryError):
    pass


class SingularBasisError(GeometryError):
    pass


class ResidualError(GeometryError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class SynthesisError(InvsdeError):
    pass


class SimulationError(InvsdeError):
    pass


class ConfigError(SimulationError, ValueError):
    pass


class CompatibilityError(SimulationError):
    """Integrator cannot be applied to the given system."""


class NoiseCountError(CompatibilityError):
    pass


class NonFiniteStateError(SimulationError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class SingularMatrixError(SimulationError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class DefinitionError(InvsdeError, ValueError):
    """Invalid system-definition document."""
