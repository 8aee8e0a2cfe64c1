"""Exception hierarchy.

Config problems and protocol failures are kept apart because the CLI maps
them to different exit codes (1 and 2).
"""


class HeteroSAgError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HeteroSAgError, ValueError):
    """Invalid or inconsistent configuration (bad G, L, K, thresholds...)."""


class ParameterError(HeteroSAgError, ValueError):
    """Key material built from mismatched group parameters, or self-pairing."""


class ProtocolError(HeteroSAgError):
    """A round could not be completed as scripted."""


class ShareError(ProtocolError):
    """Secret shares are insufficient, duplicated or malformed."""


class ReconstructionError(ProtocolError):
    """Too few survivors to reconstruct the seeds needed for decoding."""


class DecodeError(ProtocolError):
    """A decoded aggregate fell outside its representable range."""


class ShapeError(ProtocolError, ValueError):
    """A model vector does not match the length the round was planned for."""
