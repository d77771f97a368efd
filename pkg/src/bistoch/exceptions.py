"""Exception types raised across the package."""


class BistochError(Exception):
    """Base class for package errors."""


class InvalidDimension(BistochError, ValueError):
    pass


class InvalidParameters(BistochError, ValueError):
    pass


class RewriteNotApplicable(BistochError, ValueError):
    pass


class NotControlledStochastic(BistochError, ValueError):
    """Raised when a gate admits no c with U(1 x |->) = c x |->.

    The offending max-norm residual is kept on ``residual``.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class TheoremNotApplicable(BistochError, ValueError):
    pass


class NotSamplable(BistochError, ValueError):
    pass
