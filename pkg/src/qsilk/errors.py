"""Exception hierarchy shared across the package."""


class QsilkError(Exception):
    """Base class for all package errors."""


class ValidationError(QsilkError, ValueError):
    """Bad argument values, malformed inputs, violated preconditions."""


class TensorFormatError(ValidationError):
    """Array file does not satisfy the latent interchange contract."""


class GeometryError(ValidationError):
    """Tensor shape does not match the tile grid or session geometry."""


class SessionError(ValidationError):
    """Corrupt, incompatible, or locked step-session state."""
