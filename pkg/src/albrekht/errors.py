"""Exception hierarchy shared by the solvers."""


class AlbrekhtError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(AlbrekhtError, ValueError):
    pass


class StabilizabilityError(AlbrekhtError):
    pass


class DetectabilityError(AlbrekhtError):
    pass


class NumericalError(AlbrekhtError):
    pass


class OperatorSingularError(NumericalError):
    """The degree-d operator could not be inverted.

    The invertibility certificate computed for that degree is attached as
    ``certificate`` so callers can report why.
    """

    def __init__(self, message, certificate=None, degree=None):
        super().__init__(message)
        self.certificate = certificate
        self.degree = degree


class DivergenceError(AlbrekhtError):
    """A backward integration escaped to infinity.

    ``bracket`` holds the (earlier, later) times between which the blowup
    was detected.
    """

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket
