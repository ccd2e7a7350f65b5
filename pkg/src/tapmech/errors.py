"""Exception hierarchy shared by every module."""


class TapError(Exception):
    """Base class for domain errors raised by tapmech."""


class NetworkError(TapError, ValueError):
    """Structural problem with a network, flow, or instance file."""


class InfeasibleError(TapError):
    """No capacity-feasible path exists for some agent."""

    def __init__(self, message, *, stage=None, agent=None):
        super().__init__(message)
        self.stage = stage
        self.agent = agent


class NotCertifiedError(TapError):
    """A search hit its budget before it could certify a result."""


class TooLargeError(TapError):
    """Exact computation refused because the instance is too large."""
