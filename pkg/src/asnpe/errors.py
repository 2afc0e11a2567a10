"""Exception types shared across the package."""


class AsnpeError(Exception):
    """Base class for package errors."""


class ConfigError(AsnpeError):
    """Invalid configuration value or combination."""


class FlowEvaluationError(AsnpeError):
    """A density evaluation produced a non-finite intermediate."""


class TrainingDivergedError(AsnpeError):
    """Training hit non-finite losses even after the learning-rate retry."""


class SimulatorError(AsnpeError):
    """A simulator call failed (crash, timeout, malformed response)."""


class ProposalSupportError(AsnpeError):
    """Rejection sampling against the prior support starved (acceptance too low)."""


class ResumeError(AsnpeError):
    """A run directory cannot be resumed (missing state or schema mismatch)."""
