"""Exception hierarchy shared by all modules."""


__all__ = [
    "MlzError", "ModelError", "DuplicateSlope", "AsymmetricCoupling", "NonzeroDiagonal",
    "DimensionMismatch", "ParseError", "DomainError", "BranchPointError", "ResonantInput",
    "NotResonant", "ConvergenceFailure", "NoConvergence", "StepSizeUnderflow", "NonUnitaryDrift",
    "PrecisionFloor",
]


class MlzError(Exception):
    """Base class for every error raised by mlzseries."""


class ModelError(MlzError, ValueError):
    """A model violates one of its structural invariants."""


class DuplicateSlope(ModelError):
    pass


class AsymmetricCoupling(ModelError):
    pass


class NonzeroDiagonal(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class ParseError(MlzError, ValueError):
    """Malformed model file. Carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class DomainError(MlzError, ValueError):
    pass


class BranchPointError(DomainError):
    pass


class ResonantInput(MlzError, ValueError):
    pass


class NotResonant(MlzError, ValueError):
    pass


class ConvergenceFailure(MlzError, RuntimeError):
    pass


class NoConvergence(ConvergenceFailure):
    pass


class StepSizeUnderflow(MlzError, RuntimeError):
    pass


class NonUnitaryDrift(MlzError, RuntimeError):
    pass


class PrecisionFloor(MlzError, RuntimeError):
    pass
