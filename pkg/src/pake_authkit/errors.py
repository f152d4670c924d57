"""Exception hierarchy.

Authentication failures are deliberately distinct from transport failures:
callers must be able to tell "the peer's secret did not match" apart from
"the network ate a message", because the two have very different security
meaning (see the session module's guess budget).
"""


class PakeAuthError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(PakeAuthError, ValueError):
    """Invalid arguments: mixed groups, malformed fingerprints, empty secrets."""


class ProtocolError(PakeAuthError):
    """A peer message violates the protocol (malformed flow, bad transcript)."""


class MalformedEnvelope(ProtocolError):
    """Envelope bytes failed to decode.

    `reason` is a short machine-readable token (unknown_version, truncated,
    trailing_garbage, oversize, unknown_flow_type, bad_identity) and
    `offset` the byte position where decoding failed.
    """

    def __init__(self, reason: str, offset: int, detail: str = ""):
        self.reason = reason
        self.offset = offset
        msg = f"{reason} at byte {offset}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class AuthenticationFailed(PakeAuthError):
    """Key confirmation failed: the peers' effective secrets differ."""


class CarrierError(PakeAuthError):
    """Armored attachment block could not be parsed."""


class TransportError(PakeAuthError):
    """Relay or network failure; retryable."""


class RelayFull(TransportError):
    """Mailbox quota exceeded on the relay."""


class BusySession(PakeAuthError):
    """An authentication session with this peer is already in progress."""


class NoChainRoot(PakeAuthError):
    """Chained renewal requested but no prior authentication exists."""


class PeerLockedOut(PakeAuthError):
    """Too many consecutive failed attempts with this peer; manual reset required."""
