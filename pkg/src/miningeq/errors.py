"""Exception hierarchy shared by every analysis module."""


class MiningEqError(Exception):
    """Base class for all errors raised by miningeq."""


class DimensionError(MiningEqError, ValueError):
    pass


class DomainError(MiningEqError, ValueError):
    pass


class InfeasibleError(MiningEqError):
    """Participation constraint violated; ``violators`` lists the offending miner indices."""

    def __init__(self, message, violators=()):
        super().__init__(message)
        self.violators = tuple(violators)


class DegenerateDeviationError(MiningEqError):
    """The deviator's own loss is numerically zero, so a griefing factor is undefined."""


class DegenerateMarketError(MiningEqError):
    pass


class DegenerateStateError(MiningEqError):
    pass


class PreconditionError(MiningEqError, ValueError):
    pass


class ConfigError(MiningEqError, ValueError):
    pass


class ParseError(MiningEqError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ParseError):
    pass
