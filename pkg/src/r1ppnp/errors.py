"""Exception hierarchy shared by the solvers, generators and file readers."""


class PnPError(Exception):
    """Base class for every error raised by this package."""


class NonPositiveDepth(PnPError, ValueError):
    pass


class NonPositiveScale(PnPError, ValueError):
    pass


class ZeroEstimate(PnPError, ValueError):
    pass


class DegenerateConfiguration(PnPError, ArithmeticError):
    """The point geometry does not constrain the rotation (e.g. collinear shape)."""


class DegenerateScale(PnPError, ArithmeticError):
    pass


class DegenerateSample(PnPError, ArithmeticError):
    """A minimal sample is collinear or has coincident observations."""


class NoConvergence(PnPError, RuntimeError):
    pass


class NoSolution(PnPError, RuntimeError):
    """No hypothesis gathered the minimum number of inliers."""


class ParseError(PnPError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(PnPError, ValueError):
    pass
