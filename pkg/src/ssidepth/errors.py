"""Exception hierarchy shared by all modules.

Each class carries the process exit code the command-line front end uses
when the error escapes a subcommand.
"""


class SsiError(Exception):
    exit_code = 1


class ConfigError(SsiError, ValueError):
    exit_code = 2


class DimensionError(SsiError, ValueError):
    """Shapes or lengths of the inputs do not agree."""

    exit_code = 4


class ParseError(SsiError, ValueError):
    exit_code = 4


class NumericalError(SsiError, ArithmeticError):
    """Base for inputs that are well-formed but numerically degenerate."""

    exit_code = 5


class EmptyMaskError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


class DegenerateAlignmentError(NumericalError):
    pass


class DegenerateScaleError(NumericalError):
    pass


class DegenerateRangeError(NumericalError):
    pass


class DomainError(NumericalError):
    pass
