"""Exception types raised across the package."""


class MBOError(Exception):
    pass


class InsufficientDataError(MBOError, ValueError):
    pass


class ShapeError(MBOError, ValueError):
    pass


class ParameterError(MBOError, ValueError):
    pass


class InvalidDesignError(MBOError, ValueError):
    pass


class DataError(MBOError, ValueError):
    pass


class UnsupportedError(MBOError):
    pass


class UndefinedCorrelationError(MBOError, ValueError):
    pass


class InitializationError(MBOError, ValueError):
    pass


class NumericalError(MBOError, ArithmeticError):
    pass


class TrialError(MBOError):
    """A trial failed; ``seed`` names the trial seed that triggered it."""

    def __init__(self, seed, cause):
        super().__init__(f"trial seed {seed}: {cause}")
        self.seed = seed
        self.cause = cause


class MalformedContentError(MBOError, ValueError):
    pass


class VersionError(MBOError):
    pass
