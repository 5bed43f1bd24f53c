"""Exception and warning types raised across adaptkit."""


class AdaptError(Exception):
    """Base class for every error raised by adaptkit."""

    code = "AdaptError"

    def __init__(self, message="", **context):
        super().__init__(message)
        self.message = message
        self.context = context


class MissingTargetLabels(AdaptError, ValueError):
    code = "MissingTargetLabels"


class DimensionMismatch(AdaptError, ValueError):
    code = "DimensionMismatch"


class NonFiniteInput(AdaptError, ValueError):
    code = "NonFiniteInput"


class LengthMismatch(AdaptError, ValueError):
    code = "LengthMismatch"


class IncompatibleMetric(AdaptError, ValueError):
    code = "IncompatibleMetric"


class CorruptModelFile(AdaptError, ValueError):
    """Raised when a model document cannot be decoded.

    ``position`` is either a character offset (malformed JSON) or a dotted
    field path (well-formed JSON with a bad field).
    """

    code = "CorruptModelFile"

    def __init__(self, message="", position=None, **context):
        super().__init__(message, position=position, **context)
        self.position = position


class NonPositiveGamma(AdaptError, ValueError):
    code = "NonPositiveGamma"


class DegenerateData(AdaptError, ValueError):
    code = "DegenerateData"


class NotSymmetric(AdaptError, ValueError):
    code = "NotSymmetric"


class SingularSystem(AdaptError, ArithmeticError):
    code = "SingularSystem"


class Infeasible(AdaptError, ValueError):
    code = "Infeasible"


class SeparableWithoutPenalty(AdaptError, ArithmeticError):
    code = "SeparableWithoutPenalty"


class AllWeightsZero(AdaptError, ValueError):
    code = "AllWeightsZero"


class EmptyEnsemble(AdaptError, ValueError):
    code = "EmptyEnsemble"


class TooFewTargets(AdaptError, ValueError):
    code = "TooFewTargets"


class MissingColumn(AdaptError, KeyError):
    code = "MissingColumn"

    def __str__(self):
        return self.message


class UnparseableCell(AdaptError, ValueError):
    code = "UnparseableCell"


class EmptyFile(AdaptError, ValueError):
    code = "EmptyFile"


class SamplingStalled(AdaptError, RuntimeError):
    code = "SamplingStalled"


class ConfigError(AdaptError, ValueError):
    code = "ConfigError"


class NonConvergenceWarning(UserWarning):
    """An iterative solver hit its iteration cap; the best iterate is used."""
