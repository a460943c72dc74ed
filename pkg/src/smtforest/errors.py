"""Exception hierarchy shared by all modules."""


class SmtForestError(Exception):
    """Base class for every error raised by this package."""


class MalformedProofError(SmtForestError, ValueError):
    """A proof whose bitmap popcount does not match its path length."""


class DegenerateUpdateError(SmtForestError, ValueError):
    """An update proof for the very leaf that is being updated."""


class OutOfWindowError(SmtForestError, ValueError):
    """An expiry or epoch index outside the forest window."""


class InconsistentUpdateError(SmtForestError):
    """Roots that do not reproduce the signed primer."""


class AuthenticationError(SmtForestError):
    """A primer signature that does not verify under the CA key."""


class ReplayError(SmtForestError):
    """A primer older than the one already held."""


class DuplicateCertificateError(SmtForestError, ValueError):
    pass


class CertificateStateError(SmtForestError):
    """Operation not allowed for the certificate's current status."""


class DecodeError(SmtForestError, ValueError):
    """Malformed wire bytes. ``offset`` is where decoding stopped."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset
