"""Exception taxonomy shared across the package."""

from __future__ import annotations


class StitchError(Exception):
    """Base class for all errors raised by this package."""


# --- policy / configuration ---------------------------------------------


class ZeroChunkError(StitchError):
    """A text or speech chunk size of zero was requested."""


class ZeroReasonError(StitchError):
    """A reasoning-chunk pattern was configured with n_reason = 0."""


class BadOptionsError(StitchError):
    """Decode options are inconsistent with the chosen pattern."""


class NonPositiveInputError(StitchError):
    """A timing quantity that must be positive was zero or negative."""


# --- sequences ------------------------------------------------------------


class MalformedResponseError(StitchError):
    """Response segments violate the interleaving invariants."""


class InvalidSequenceError(StitchError):
    """A sequence failed validation where a valid one is required."""


class TokenDecodeError(StitchError):
    """A serialized token or segment could not be decoded."""


# --- scheduler ------------------------------------------------------------


class KindMismatchError(StitchError):
    """The generator produced a token of the wrong kind."""


class MarkOutOfPlaceError(StitchError):
    """A control mark is illegal in the current decode phase."""


class FedAfterDoneError(StitchError):
    """A token was fed after the response completed."""


class NotExternalModeError(StitchError):
    """Reasoning injection requires external-reasoning mode."""


class WrongPhaseError(StitchError):
    """Reasoning injection attempted outside the reasoning phase."""


# --- generator adapters ----------------------------------------------------


class TraceExhaustedError(StitchError):
    """The replay trace has no more tokens."""


class TraceKindMismatchError(StitchError):
    """The recorded token cannot satisfy the requested kind."""


class TransportError(StitchError):
    """The remote generator endpoint could not be reached."""


class ProtocolViolationError(StitchError):
    """The remote generator returned a malformed reply."""
