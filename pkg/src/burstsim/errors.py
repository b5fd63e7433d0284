"""Exception hierarchy shared by all burstsim modules."""


class BurstSimError(Exception):
    """Base class for every error raised by burstsim."""


class SchedulingInPast(BurstSimError):
    pass


class ParseError(BurstSimError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(BurstSimError):
    pass


class NonPositiveField(BurstSimError):
    pass


class InvalidDistribution(BurstSimError):
    pass


class UnknownApp(BurstSimError):
    pass


class JobTooLarge(BurstSimError):
    pass


class IllegalTransition(BurstSimError):
    pass


class PoolExhausted(BurstSimError):
    pass


class AboveMax(BurstSimError):
    pass


class UnroutableJob(BurstSimError):
    pass


class CorruptLog(BurstSimError):
    pass


class ConfigError(BurstSimError):
    """Scenario or component configuration is invalid (CLI exit code 1)."""


class InvariantViolation(BurstSimError):
    """A runtime invariant was broken (CLI exit code 2)."""
