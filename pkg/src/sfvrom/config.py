"""Package logger, error hierarchy and exit codes."""

import logging

log = logging.getLogger("sfvrom")


class RepeatedWarningFilter(logging.Filter):
    """Lets each distinct warning message through once."""

    def __init__(self):
        super().__init__()
        self.seen = set()

    def filter(self, record):
        if record.levelno != logging.WARNING:
            return True
        message = record.getMessage()
        if message in self.seen:
            return False
        self.seen.add(message)
        return True


log.addFilter(RepeatedWarningFilter())


class SFVError(Exception):
    """Base class of every expected failure raised by ``sfvrom``."""

    exit_code = 1


class ConfigurationError(SFVError, ValueError):
    """Invalid grid, density, configuration key or method combination."""

    exit_code = 2


class RankDeficiencyError(ConfigurationError):
    """Requested more basis modes than the data supports."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class AssemblyError(ConfigurationError):
    """Snapshot pieces do not fit together (frames, shapes, metadata)."""


class PositivityError(SFVError):
    """Inadmissible state (negative density or pressure).

    ``location`` names where it happened, e.g.
    ``{"interface": 12, "stochastic_cell": 3, "node": 13, "quantity": "pressure"}``.
    """

    exit_code = 3

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = dict(location or {})


class IntegrationError(SFVError):
    """Time integration could not proceed; carries the last accepted state."""

    exit_code = 4

    def __init__(self, message, last_state=None, time=None):
        super().__init__(message)
        self.last_state = last_state
        self.time = time


class ArtifactIOError(SFVError, OSError):
    """Reading or writing a persisted artifact failed."""

    exit_code = 5


class NumericalError(SFVError):
    """A statistic came out numerically inconsistent."""


def raise_error(exception, message="", **kwargs):
    """Log ``message`` and raise ``exception(message)``."""
    log.error(message)
    raise exception(message, **kwargs)
