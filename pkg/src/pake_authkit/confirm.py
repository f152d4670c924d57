"""Key refresh, confirmation tags and entity binding.

The raw shared secret is refreshed through a KDF into a session key plus one
MAC key per direction; each side then MACs both public-key fingerprints and
the session id, and only releases the session key after the peer's tag
verifies. In the embedded-secret variant the fingerprints ride inside the
password instead, and the tags cover only the session id.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from enum import Enum

from .errors import AuthenticationFailed, ProtocolError, UsageError
from .framing import lp
from .pake import FlowMessage, RawSharedSecret, normalize_secret
from .trustwords import Fingerprint

KEY_LEN = 32
MAC_LEN = 32

KDF_LABEL_SESSION = b"session-key"
KDF_LABEL_MAC_A = b"mac-key-A"
KDF_LABEL_MAC_B = b"mac-key-B"


def _hkdf_extract(ikm: bytes, salt: bytes = b"\x00" * 32) -> bytes:
    return hmac.new(salt, ikm, hashlib.sha256).digest()


def _hkdf_expand(prk: bytes, info: bytes, length: int = KEY_LEN) -> bytes:
    out = b""
    block = b""
    counter = 1
    while len(out) < length:
        block = hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        out += block
        counter += 1
    return out[:length]


def kdf(source: bytes, info: bytes, length: int = KEY_LEN) -> bytes:
    """Extract-then-expand over SHA-256."""
    return _hkdf_expand(_hkdf_extract(source), info, length)


class KeyBundle:
    """Session key plus per-direction MAC keys; zeroizable.

    The backing buffers are bytearrays so `destroy()` can overwrite them;
    accessing a destroyed bundle raises.
    """

    def __init__(self, session_key: bytes, mac_key_a: bytes, mac_key_b: bytes):
        self._k = bytearray(session_key)
        self._ka = bytearray(mac_key_a)
        self._kb = bytearray(mac_key_b)
        self._destroyed = False

    def _get(self, buf: bytearray) -> bytes:
        if self._destroyed:
            raise UsageError("key bundle has been destroyed")
        return bytes(buf)

    @property
    def session_key(self) -> bytes:
        return self._get(self._k)

    @property
    def mac_key_a(self) -> bytes:
        return self._get(self._ka)

    @property
    def mac_key_b(self) -> bytes:
        return self._get(self._kb)

    @property
    def destroyed(self) -> bool:
        return self._destroyed

    def destroy(self):
        for buf in (self._k, self._ka, self._kb):
            for i in range(len(buf)):
                buf[i] = 0
        self._destroyed = True

    def __eq__(self, other):
        if not isinstance(other, KeyBundle):
            return NotImplemented
        if self._destroyed or other._destroyed:
            return False
        return (self._k, self._ka, self._kb) == (other._k, other._ka, other._kb)


@dataclass(frozen=True)
class SessionId:
    """Digest of the full first-round transcript."""

    sid: bytes

    def __post_init__(self):
        if len(self.sid) != 32:
            raise UsageError("sid must be 32 bytes")


class TagDirection(Enum):
    FROM_A = 1
    FROM_B = 2


@dataclass(frozen=True)
class ConfirmationTag:
    tag: bytes
    direction: TagDirection


def derive_key_bundle(sk: RawSharedSecret) -> KeyBundle:
    """Refresh the raw secret into (session key, MAC key A, MAC key B)."""
    return KeyBundle(
        kdf(sk.sk, KDF_LABEL_SESSION),
        kdf(sk.sk, KDF_LABEL_MAC_A),
        kdf(sk.sk, KDF_LABEL_MAC_B),
    )


def compute_sid(transcript) -> SessionId:
    """Session id over the two first-round flows, initiator's first."""
    flows = list(transcript)
    if len(flows) != 2 or not all(isinstance(f, FlowMessage) for f in flows):
        raise ProtocolError("sid needs exactly the two first-round flow messages")
    return SessionId(
        hashlib.sha256(b"sid" + lp(flows[0].to_bytes()) + lp(flows[1].to_bytes())).digest()
    )


def compute_tag(k_mac: bytes, fpr_a: Fingerprint, fpr_b: Fingerprint,
                sid: SessionId, direction: TagDirection) -> ConfirmationTag:
    """MAC over both public-key fingerprints and the session id."""
    msg = fpr_a.bits + fpr_b.bits + sid.sid
    return ConfirmationTag(hmac.new(k_mac, msg, hashlib.sha256).digest(), direction)


def compute_tag_embedded(k_mac: bytes, sid: SessionId,
                         direction: TagDirection) -> ConfirmationTag:
    """Embedded-secret variant: the fingerprints are in the password, so the
    tag covers only the session id."""
    return ConfirmationTag(hmac.new(k_mac, sid.sid, hashlib.sha256).digest(), direction)


def verify_peer_tag(expected: ConfirmationTag, received: ConfirmationTag):
    """Constant-time tag check; raises AuthenticationFailed on any mismatch."""
    if received.direction is not expected.direction:
        raise AuthenticationFailed("confirmation tag direction mismatch")
    if len(received.tag) != MAC_LEN:
        raise AuthenticationFailed("confirmation tag has wrong length")
    if not hmac.compare_digest(expected.tag, received.tag):
        raise AuthenticationFailed("confirmation tag mismatch")


def compose_embedded_secret(user_secret: str, fpr_a: Fingerprint,
                            fpr_b: Fingerprint) -> str:
    """Append both fingerprints (hex) to the normalized user secret.

    Used instead of the bare secret when the key fingerprints should be
    bound through the password itself; any disagreement about either key
    diverges the two sides' scalars and key confirmation aborts.
    """
    return normalize_secret(user_secret) + fpr_a.hex() + fpr_b.hex()
