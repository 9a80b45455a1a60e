"""Exception hierarchy.

Domain failures derive from :class:`QuadradonError`; configuration problems
derive from :class:`ConfigError`. The CLI maps the two families onto
distinct exit codes.
"""


class QuadradonError(Exception):
    """Base class for numerical/domain errors."""


class NotSymmetric(QuadradonError):
    pass


class Singular(QuadradonError):
    pass


class BadDomain(QuadradonError):
    pass


class UnknownKind(QuadradonError):
    pass


class BadParaboloid(QuadradonError):
    pass


class EmptySurface(QuadradonError):
    pass


class NotOnSigma(QuadradonError):
    pass


class NoneFound(QuadradonError):
    pass


class UnboundedWithoutBox(QuadradonError):
    pass


class EmptyIntersection(QuadradonError):
    pass


class SupportIntersectsSurface(QuadradonError):
    pass


class GridMismatch(QuadradonError):
    pass


class NoSolution(QuadradonError):
    pass


class ZeroTau(QuadradonError):
    pass


class ConfigError(Exception):
    """Base class for configuration errors."""


class ParseError(ConfigError):
    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class ValidationError(ConfigError):
    def __init__(self, field, message=""):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}" if message else field)
