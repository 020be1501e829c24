"""Exception types shared across the package."""


class AoisegError(Exception):
    """Base class for all aoiseg errors."""


class InputError(AoisegError, ValueError):
    """Caller passed data that violates an operation's precondition."""


class IllegalActionError(AoisegError):
    """An action was applied that the legal-action mask forbids."""


class TrainingError(AoisegError):
    """Training diverged (non-finite loss or parameters)."""


class ConfigError(AoisegError, ValueError):
    """Experiment configuration is malformed or inconsistent."""
