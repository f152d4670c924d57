"""Blinded ephemeral key exchange from a shared low-entropy secret.

One round: each side sends its identity, its public key, and a blinded
ephemeral element (the ephemeral Diffie-Hellman share multiplied by a fixed
public point raised to the password scalar). Both sides then derive the same
raw shared secret iff their password scalars match. Entity binding happens
afterwards in the confirm module; nothing here releases a usable key.

A passive transcript is consistent with every candidate password: for any
observed blinded value and any password there is exactly one coin explaining
it (exhaustively checked in the tiny test group).
"""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass
from enum import Enum

from .errors import ProtocolError, UsageError
from .framing import Cursor, lp, lp_str
from .group import (GroupElement, GroupSpec, Scalar, div, elem_pow, g_pow,
                    mul, random_scalar)
from .trustwords import Fingerprint, fingerprint

PROTOCOL_HASH = "sha256"

MAX_IDENTITY_BYTES = 1024
MAX_PK_BYTES = 49152

# fixed per-deployment blinding points, derived nothing-up-my-sleeve
M_LABEL = b"pake-authkit:M"
N_LABEL = b"pake-authkit:N"


def _hash(data: bytes, hash_id: str = PROTOCOL_HASH) -> bytes:
    if hash_id != "sha256":
        raise UsageError(f"unsupported protocol hash {hash_id!r}")
    return hashlib.sha256(data).digest()


class PakeRole(Enum):
    """Initiator blinds with M, Responder with N."""

    INITIATOR = "A"
    RESPONDER = "B"

    def other(self) -> "PakeRole":
        return PakeRole.RESPONDER if self is PakeRole.INITIATOR else PakeRole.INITIATOR


@dataclass(frozen=True)
class PublicParams:
    """Group, blinding points and protocol hash shared by all participants."""

    spec: GroupSpec
    M: GroupElement
    N: GroupElement
    hash_id: str = PROTOCOL_HASH

    def __post_init__(self):
        self.spec._check_own(self.M, self.N)
        if self.M.is_identity() or self.N.is_identity():
            raise UsageError("blinding points must not be the identity")
        if self.M == self.N:
            raise UsageError("M and N must differ")

    @classmethod
    def default(cls, spec: GroupSpec) -> "PublicParams":
        return cls(spec, spec.hash_to_element(M_LABEL), spec.hash_to_element(N_LABEL))

    def blind_point(self, role: PakeRole) -> GroupElement:
        return self.M if role is PakeRole.INITIATOR else self.N


@dataclass(frozen=True)
class PasswordScalar:
    """The user secret mapped into the exponent space."""

    pi: Scalar
    source_tag: str = "direct"   # "direct" | "embedded"


@dataclass(frozen=True)
class RawSharedSecret:
    """Hash-length secret both sides derive; input to the key bundle KDF."""

    sk: bytes


@dataclass(frozen=True)
class FlowMessage:
    """First-round message: sender identity, sender public key, blinded element."""

    identity: str
    pk: bytes
    blinded: GroupElement

    def to_bytes(self) -> bytes:
        return lp_str(self.identity) + lp(self.pk) + lp(self.blinded.encode())

    @classmethod
    def from_bytes(cls, data: bytes, spec: GroupSpec) -> "FlowMessage":
        cur = Cursor(data)
        ident_raw = cur.take_lp("identity", limit=MAX_IDENTITY_BYTES)
        pk = cur.take_lp("public key", limit=MAX_PK_BYTES)
        blinded_raw = cur.take_lp("blinded element", limit=spec.element_length)
        cur.expect_end()
        try:
            identity = ident_raw.decode("utf-8")
            blinded = spec.decode(blinded_raw)
        except (UnicodeDecodeError, UsageError) as exc:
            raise ProtocolError(f"malformed flow: {exc}") from exc
        if not identity:
            raise ProtocolError("malformed flow: empty identity")
        return cls(identity, pk, blinded)


class EphemeralState:
    """Single-owner state between start and finish. The coin is never
    serialized and is wiped when finish consumes the state."""

    def __init__(self, params: PublicParams, role: PakeRole, x: Scalar,
                 x_star: GroupElement, identity: str, pk_fpr: Fingerprint,
                 pi: PasswordScalar):
        self.params = params
        self.role = role
        self._x = x
        self.x_star = x_star
        self.identity = identity
        self.pk_fpr = pk_fpr
        self.pi = pi

    @property
    def consumed(self) -> bool:
        return self._x is None

    def __repr__(self):
        return f"<EphemeralState role={self.role.value} identity={self.identity!r}>"


def normalize_secret(secret: str) -> str:
    """NFC-normalize, trim surrounding whitespace, upper-case.

    Upper-casing trades a little entropy for resilience against peers typing
    the same phrase with different letter case.
    """
    out = unicodedata.normalize("NFC", secret).strip().upper()
    if not out:
        raise UsageError("secret is empty after normalization")
    return out


def derive_password_scalar(secret: str, params: PublicParams,
                           source_tag: str = "direct") -> PasswordScalar:
    """Map a user secret deterministically into [0, order)."""
    norm = normalize_secret(secret)
    digest = _hash(b"pwd-to-scalar" + norm.encode("utf-8"), params.hash_id)
    return PasswordScalar(
        Scalar(int.from_bytes(digest, "big") % params.spec.order), source_tag
    )


def pake_start(params: PublicParams, role: PakeRole, pi: PasswordScalar,
               identity: str, pk: bytes, rng=None,
               coin: Scalar | None = None) -> tuple[EphemeralState, FlowMessage]:
    """Draw a fresh coin and emit the blinded first-round flow.

    `coin` overrides the random draw; that exists for test vectors only.
    """
    if not identity:
        raise UsageError("identity must be non-empty")
    if len(identity.encode("utf-8")) > MAX_IDENTITY_BYTES:
        raise UsageError("identity too long")
    x = coin if coin is not None else random_scalar(params.spec, rng)
    x_star = mul(g_pow(params.spec, x), elem_pow(params.blind_point(role), pi.pi))
    state = EphemeralState(params, role, x, x_star, identity, fingerprint(pk), pi)
    return state, FlowMessage(identity, pk, x_star)


def pake_finish(state: EphemeralState, peer: FlowMessage,
                self_id: str, peer_id: str) -> RawSharedSecret:
    """Unblind the peer flow and derive the raw shared secret.

    The hashed tuple always carries the initiator's identity and blinded
    element in the first slots, whichever side computes it.
    """
    if state.consumed:
        raise UsageError("ephemeral state already consumed")
    params = state.params
    spec = params.spec
    spec._check_own(peer.blinded)
    if not spec._is_member(peer.blinded.raw):
        raise ProtocolError("malformed flow: blinded element not in group")
    if spec.identity_guard and peer.blinded.is_identity():
        raise ProtocolError("malformed flow: identity blinded element")

    unblind = elem_pow(params.blind_point(state.role.other()), state.pi.pi)
    shared = elem_pow(div(peer.blinded, unblind), state._x)

    if state.role is PakeRole.INITIATOR:
        id_a, id_b = self_id, peer_id
        star_a, star_b = state.x_star, peer.blinded
    else:
        id_a, id_b = peer_id, self_id
        star_a, star_b = peer.blinded, state.x_star

    sk = _hash(
        lp_str(id_a) + lp_str(id_b)
        + star_a.encode() + star_b.encode()
        + spec.encode_scalar(state.pi.pi)
        + shared.encode(),
        params.hash_id,
    )
    state._x = None
    return RawSharedSecret(sk)
