"""Exception types shared across the toolkit.

Every failure the library raises on purpose derives from CoprGuardError so the
CLI can map it to a stable exit status. Anything else escaping a command is a
bug and reports as an internal error.
"""


class CoprGuardError(Exception):
    """Base class for all expected toolkit failures."""


class FormatError(CoprGuardError):
    """Unsupported or corrupt file format (image, container, key, manifest)."""


class DimensionError(CoprGuardError):
    """Array or image dimensions violate an operation's requirements."""


class SizeError(CoprGuardError):
    """Input is too small for the requested operation."""


class DomainError(CoprGuardError):
    """Parameter or data outside the operation's domain (empty corpus, bad range)."""


class SpecError(CoprGuardError):
    """Malformed degradation-channel or schedule spec string."""

    def __init__(self, message: str, token: str | None = None):
        super().__init__(message)
        self.token = token


class KeyMismatchError(CoprGuardError):
    """Calibration record and key fingerprints disagree."""


class SingularFitError(CoprGuardError):
    """Least-squares fit is degenerate (zero-variance regressor)."""
