"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`PPGError`. Input
problems also derive from :class:`ValueError` so callers that only know
the builtin still catch them.
"""


class PPGError(Exception):
    """Base class for all toolkit errors."""


class ParseError(PPGError, ValueError):
    pass


class DataError(PPGError, ValueError):
    pass


class SchemaError(PPGError, ValueError):
    pass


class ArgumentError(PPGError, ValueError):
    pass


class FileError(PPGError, FileNotFoundError):
    pass


class DesignError(PPGError, ValueError):
    pass


class LengthError(PPGError, ValueError):
    pass


class DemodError(PPGError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NormalizationError(PPGError, ValueError):
    pass


class QualityError(PPGError):
    pass


class FiducialError(PPGError):
    pass


class FeatureError(PPGError):
    pass


class RankError(PPGError, ValueError):
    pass


class SplitError(PPGError, ValueError):
    pass


class LabelError(PPGError, ValueError):
    pass


class TrainingDivergedError(PPGError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class GradCheckError(PPGError, AssertionError):
    def __init__(self, message, tensor=None, rel_error=None):
        super().__init__(message)
        self.tensor = tensor
        self.rel_error = rel_error
