"""Per-peer authentication sessions over asynchronous transport.

A session drives one run of the blinded exchange plus key confirmation
through envelopes that may arrive late, duplicated or out of order. The
responder's confirmation tag travels together with its first-round flow
(concurrent tag sending saves a flow), so the full handshake is:

    initiator                         responder
    FLOW1  ------------------------>
           <------------------------ FLOW2, TAG_B
    TAG_A  ------------------------>

State machine per record:

    initiator: FLOW_SENT -> FLOW_RECEIVED -> AWAIT_TAG -> ACCEPTED | ABORTED
    responder: AWAIT_SECRET? -> FLOW_RECEIVED -> AWAIT_TAG -> ACCEPTED | ABORTED

A record verifies exactly one peer tag, so one session can test at most one
candidate password — the property the per-peer guess budget builds on.
Timeouts are indistinguishable from network failure and never count as
failed guesses.
"""

from __future__ import annotations

import logging
import os
import secrets
import time
from dataclasses import dataclass, field
from enum import Enum

from .confirm import (ConfirmationTag, KeyBundle, SessionId, TagDirection,
                      compose_embedded_secret, compute_sid, compute_tag,
                      compute_tag_embedded, derive_key_bundle, kdf,
                      verify_peer_tag)
from .errors import (AuthenticationFailed, BusySession, NoChainRoot,
                     PeerLockedOut, ProtocolError, UsageError)
from .framing import U32, U64, Cursor, lp, lp_str
from .group import P256
from .pake import (EphemeralState, FlowMessage, PakeRole, PasswordScalar,
                   PublicParams, derive_password_scalar, pake_finish,
                   pake_start)
from .transport import Envelope, FlowType
from .trustwords import Fingerprint, fingerprint

log = logging.getLogger("pake_authkit.session")

DEFAULT_MAX_ATTEMPTS = 3

CHAIN_LABEL = b"chain"
CHAIN_ROOT_LABEL = b"chain-root"

_default_params: PublicParams | None = None


def default_params() -> PublicParams:
    """Deployment-wide public parameters over the production group."""
    global _default_params
    if _default_params is None:
        _default_params = PublicParams.default(P256)
    return _default_params


class Phase(Enum):
    AWAIT_SECRET = "await-secret"
    FLOW_SENT = "flow-sent"
    FLOW_RECEIVED = "flow-received"
    AWAIT_TAG = "await-tag"
    ACCEPTED = "accepted"
    ABORTED = "aborted"


TERMINAL = (Phase.ACCEPTED, Phase.ABORTED)

ABORT_AUTH_FAILED = "auth-failed"
ABORT_TIMEOUT = "timeout"
ABORT_PROTOCOL = "protocol"


@dataclass
class SessionRecord:
    conversation_id: bytes
    peer_identity: str
    role: PakeRole
    mode: str
    phase: Phase
    created_at: float
    updated_at: float
    is_renewal: bool = False
    renewal_counter: int = 0
    session_id: SessionId | None = None
    failed_attempts: int = 0
    chain_counter: int = 0
    established_key: KeyBundle | None = None
    abort_reason: str | None = None
    peer_pk: bytes | None = None
    tag_verifications: int = 0   # instrumentation: must never exceed 1

    # protocol internals, never serialized
    _state: EphemeralState | None = None
    _own_flow: FlowMessage | None = None
    _peer_flow: FlowMessage | None = None
    _bundle: KeyBundle | None = None
    _own_pk: bytes = b""
    _expected_peer_pk: bytes | None = None
    _new_own_pk: bytes | None = None
    _seen: set = field(default_factory=set)
    _buffered: list = field(default_factory=list)
    _pending_first: Envelope | None = None

    def summary(self) -> str:
        if self.phase is Phase.ACCEPTED:
            state = "ACCEPTED"
        elif self.phase is Phase.ABORTED:
            # a timeout is deliberately NOT reported as a failure: it is
            # indistinguishable from a network fault
            state = ("TIMEOUT" if self.abort_reason == ABORT_TIMEOUT
                     else f"ABORTED({self.abort_reason})")
        else:
            state = self.phase.value
        return f"{self.peer_identity} {state}"


@dataclass
class SessionOutcome:
    kind: str                       # "accepted" | "auth-failed"
    peer_fingerprint: Fingerprint | None = None
    session_key: bytes | None = None

    @property
    def accepted(self) -> bool:
        return self.kind == "accepted"


@dataclass
class HandleResult:
    record: SessionRecord
    outbound: list
    outcome: SessionOutcome | None = None
    needs_secret: bool = False


# ---------------------------------------------------------------------------
# trust store

EVENT_AUTHENTICATED = 1
EVENT_FAILURE = 2
EVENT_RESET = 3

JOURNAL_VERSION = 1


@dataclass
class PeerEntry:
    fingerprint: Fingerprint
    chain_key: bytes
    chain_counter: int
    failed_attempts: int = 0
    renewals: list = field(default_factory=list)   # (counter, fingerprint, timestamp)


class PeerTrustStore:
    """Authenticated peers, chain keys and the per-peer failure counter.

    Backed by an append-only journal of length-prefixed records
    (version, event type, timestamp, payload); state is rebuilt by replay.
    The file contains chain keys and must be protected like a keyring.
    """

    def __init__(self, path: str | None = None, clock=time.time):
        self.path = path
        self.clock = clock
        self.entries: dict[str, PeerEntry] = {}
        if path and os.path.exists(path):
            self._replay()

    # journal plumbing
    def _append(self, event_type: int, payload: bytes):
        if not self.path:
            return
        body = bytes([JOURNAL_VERSION, event_type]) + U64.pack(int(self.clock())) + payload
        with open(self.path, "ab") as fh:
            fh.write(lp(body))
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self):
        with open(self.path, "rb") as fh:
            data = fh.read()
        pos = 0
        while pos + 4 <= len(data):
            (length,) = U32.unpack(data[pos : pos + 4])
            end = pos + 4 + length
            if length < 10 or end > len(data):
                break   # torn tail
            body = data[pos + 4 : end]
            self._apply(body)
            pos = end

    def _apply(self, body: bytes):
        cur = Cursor(body)
        version = cur.u8()
        if version != JOURNAL_VERSION:
            return
        event = cur.u8()
        cur.u64()   # timestamp; kept for audit, not needed to rebuild
        peer = cur.take_lp("peer").decode("utf-8")
        if event == EVENT_AUTHENTICATED:
            fpr = Fingerprint(cur.take_lp("fingerprint"))
            chain_key = cur.take_lp("chain key")
            counter = cur.u64()
            self._set_authenticated(peer, fpr, chain_key, counter)
        elif event == EVENT_FAILURE:
            entry = self.entries.get(peer)
            if entry:
                entry.failed_attempts += 1
            else:
                self.entries[peer] = PeerEntry(Fingerprint(bytes(20)), b"", 0,
                                               failed_attempts=1)
        elif event == EVENT_RESET:
            entry = self.entries.get(peer)
            if entry:
                entry.failed_attempts = 0

    def _set_authenticated(self, peer, fpr, chain_key, counter):
        entry = self.entries.get(peer)
        if entry is None or not entry.chain_key:
            entry = PeerEntry(fpr, chain_key, counter)
            self.entries[peer] = entry
        else:
            entry.fingerprint = fpr
            entry.chain_key = chain_key
            entry.chain_counter = counter
        entry.failed_attempts = 0
        entry.renewals.append((counter, fpr, int(self.clock())))

    # public surface
    def entry(self, peer: str) -> PeerEntry | None:
        e = self.entries.get(peer)
        return e if e is not None and e.chain_key else None

    def failures(self, peer: str) -> int:
        e = self.entries.get(peer)
        return e.failed_attempts if e else 0

    def record_authenticated(self, peer: str, fpr: Fingerprint,
                             chain_key: bytes, counter: int):
        self._set_authenticated(peer, fpr, chain_key, counter)
        self._append(
            EVENT_AUTHENTICATED,
            lp_str(peer) + lp(fpr.bits) + lp(chain_key) + U64.pack(counter),
        )

    def record_failure(self, peer: str) -> int:
        entry = self.entries.setdefault(
            peer, PeerEntry(Fingerprint(bytes(20)), b"", 0)
        )
        entry.failed_attempts += 1
        self._append(EVENT_FAILURE, lp_str(peer))
        return entry.failed_attempts

    def reset_lockout(self, peer: str):
        entry = self.entries.get(peer)
        if entry:
            entry.failed_attempts = 0
        self._append(EVENT_RESET, lp_str(peer))


def enforce_guess_budget(store: PeerTrustStore, peer: str,
                         max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> str:
    """'allowed' until max_attempts consecutive verified mismatches, then
    'locked' until reset_lockout. Timeouts never count."""
    return "locked" if store.failures(peer) >= max_attempts else "allowed"


# ---------------------------------------------------------------------------
# session manager


class SessionManager:
    """One protocol endpoint: owns the identity, key, trust store and all
    in-flight session records (keyed by conversation id)."""

    def __init__(self, identity: str, public_key: bytes, *,
                 params: PublicParams | None = None,
                 store: PeerTrustStore | None = None,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                 rng=None, clock=time.time):
        if not identity:
            raise UsageError("identity must be non-empty")
        self.identity = identity
        self.public_key = public_key
        self.params = params or default_params()
        self.store = store or PeerTrustStore()
        self.max_attempts = max_attempts
        self.rng = rng
        self.clock = clock
        self.sessions: dict[bytes, SessionRecord] = {}

    # -- helpers -----------------------------------------------------------

    def _now(self) -> float:
        return self.clock()

    def _new_conversation_id(self) -> bytes:
        return self.rng.randbytes(16) if self.rng is not None else secrets.token_bytes(16)

    def _envelope(self, flow_type: FlowType, record: SessionRecord,
                  payload: bytes) -> Envelope:
        return Envelope(flow_type, record.conversation_id, self.identity, payload)

    def _active_with(self, peer: str) -> SessionRecord | None:
        for rec in self.sessions.values():
            if rec.peer_identity == peer and rec.phase not in TERMINAL:
                return rec
        return None

    def _password_scalar(self, secret, mode: str, initiator_pk: bytes | None,
                         responder_pk: bytes | None) -> PasswordScalar:
        if isinstance(secret, PasswordScalar):
            return secret
        if mode == "direct":
            return derive_password_scalar(secret, self.params)
        if mode == "embedded":
            # the composed secret always carries the initiator's fingerprint
            # first, whichever side derives it
            if initiator_pk is None or responder_pk is None:
                raise UsageError("embedded mode needs both public keys to compose the secret")
            composed = compose_embedded_secret(
                secret, fingerprint(initiator_pk), fingerprint(responder_pk)
            )
            return derive_password_scalar(composed, self.params, source_tag="embedded")
        raise UsageError(f"unknown mode {mode!r}")

    # -- initiator ---------------------------------------------------------

    def start_session(self, peer: str, secret, mode: str = "direct",
                      expected_peer_pk: bytes | None = None
                      ) -> tuple[SessionRecord, Envelope]:
        """Begin authenticating `peer`; returns the record and the first flow."""
        if enforce_guess_budget(self.store, peer, self.max_attempts) == "locked":
            raise PeerLockedOut(
                f"{peer}: {self.store.failures(peer)} consecutive failures; reset required"
            )
        if self._active_with(peer):
            raise BusySession(f"a session with {peer} is already in progress")
        if mode == "embedded":
            # initiator composes pi before any flow exists, so the expected
            # peer key is mandatory here
            if expected_peer_pk is None:
                raise UsageError("embedded mode requires expected_peer_pk")
        pi = self._password_scalar(secret, mode, self.public_key, expected_peer_pk)
        return self._start_with_scalar(peer, pi, mode, self.public_key,
                                       expected_peer_pk, FlowType.FLOW1)

    def _start_with_scalar(self, peer, pi, mode, own_pk, expected_peer_pk,
                           flow_type, renewal_counter=0, new_own_pk=None
                           ) -> tuple[SessionRecord, Envelope]:
        state, flow = pake_start(self.params, PakeRole.INITIATOR, pi,
                                 self.identity, own_pk, self.rng)
        now = self._now()
        record = SessionRecord(
            conversation_id=self._new_conversation_id(),
            peer_identity=peer, role=PakeRole.INITIATOR, mode=mode,
            phase=Phase.FLOW_SENT, created_at=now, updated_at=now,
            is_renewal=flow_type is FlowType.RENEWAL,
            renewal_counter=renewal_counter,
        )
        record._state = state
        record._own_flow = flow
        record._own_pk = own_pk
        record._expected_peer_pk = expected_peer_pk
        record._new_own_pk = new_own_pk
        self.sessions[record.conversation_id] = record
        payload = flow.to_bytes()
        if flow_type is FlowType.RENEWAL:
            payload = U64.pack(renewal_counter) + payload
        record._seen.add(int(flow_type))
        return record, self._envelope(flow_type, record, payload)

    # -- chaining ----------------------------------------------------------

    def renew_chain(self, peer: str, new_pk: bytes | None = None
                    ) -> tuple[SessionRecord, Envelope]:
        """Re-authenticate automatically from the stored chain key; binds
        `new_pk` as this side's key if given. No user secret involved."""
        entry = self.store.entry(peer)
        if entry is None:
            raise NoChainRoot(f"no authenticated chain with {peer}")
        if self._active_with(peer):
            raise BusySession(f"a session with {peer} is already in progress")
        counter = entry.chain_counter + 1
        pi = self._chain_scalar(entry.chain_key, counter)
        own_pk = new_pk if new_pk is not None else self.public_key
        return self._start_with_scalar(peer, pi, "direct", own_pk, None,
                                       FlowType.RENEWAL, counter, new_pk)

    def _chain_scalar(self, chain_key: bytes, counter: int) -> PasswordScalar:
        secret = kdf(chain_key, CHAIN_LABEL + U64.pack(counter)).hex()
        return derive_password_scalar(secret, self.params)

    # -- envelope dispatch ---------------------------------------------------

    def handle_envelope(self, env: Envelope, secret=None, mode: str = "direct",
                        expected_peer_pk: bytes | None = None) -> HandleResult:
        """Drive the state machine with one incoming envelope.

        Replays are swallowed idempotently; a first flow from an unknown
        conversation opens a responder session (which waits in AWAIT_SECRET
        if no secret was supplied); anything else out of place raises
        ProtocolError.
        """
        record = self.sessions.get(env.conversation_id)
        if record is None:
            if env.flow_type is FlowType.FLOW1:
                return self._open_responder(env, secret, mode, expected_peer_pk)
            if env.flow_type is FlowType.RENEWAL:
                return self._open_renewal_responder(env)
            raise ProtocolError(f"{env.flow_type.name} for unknown conversation")

        if int(env.flow_type) in record._seen:
            return HandleResult(record, [])   # duplicate delivery
        if record.phase in TERMINAL:
            return HandleResult(record, [])

        if record.role is PakeRole.INITIATOR:
            return self._initiator_dispatch(record, env)
        return self._responder_dispatch(record, env, secret, mode, expected_peer_pk)

    # responder paths

    def _open_responder(self, env, secret, mode, expected_peer_pk) -> HandleResult:
        now = self._now()
        record = SessionRecord(
            conversation_id=env.conversation_id, peer_identity=env.sender_identity,
            role=PakeRole.RESPONDER, mode=mode, phase=Phase.AWAIT_SECRET,
            created_at=now, updated_at=now,
        )
        record._own_pk = self.public_key
        record._expected_peer_pk = expected_peer_pk
        record._pending_first = env
        record._seen.add(int(env.flow_type))
        self.sessions[record.conversation_id] = record
        if secret is None:
            return HandleResult(record, [], needs_secret=True)
        return self.provide_secret(env.conversation_id, secret, mode, expected_peer_pk)

    def provide_secret(self, conversation_id: bytes, secret, mode: str = "direct",
                       expected_peer_pk: bytes | None = None) -> HandleResult:
        """Supply the user secret for a session parked in AWAIT_SECRET."""
        record = self.sessions.get(conversation_id)
        if record is None or record.phase is not Phase.AWAIT_SECRET:
            raise UsageError("no session awaiting a secret for this conversation")
        env = record._pending_first
        record.mode = mode
        if expected_peer_pk is not None:
            record._expected_peer_pk = expected_peer_pk
        if enforce_guess_budget(self.store, record.peer_identity, self.max_attempts) == "locked":
            raise PeerLockedOut(f"{record.peer_identity} is locked out")

        flow_a = self._parse_flow(env.payload, env.sender_identity)
        pi = self._password_scalar(secret, mode, flow_a.pk, self.public_key)
        return self._respond(record, flow_a, pi)

    def _open_renewal_responder(self, env: Envelope) -> HandleResult:
        cur = Cursor(env.payload)
        counter = cur.u64("renewal counter")
        flow_a = self._parse_flow(cur.take(cur.remaining()), env.sender_identity)
        entry = self.store.entry(env.sender_identity)
        if entry is None:
            raise ProtocolError(f"renewal from {env.sender_identity} without a chain")
        if counter != entry.chain_counter + 1:
            raise ProtocolError(
                f"renewal counter {counter}, expected {entry.chain_counter + 1}"
            )
        now = self._now()
        record = SessionRecord(
            conversation_id=env.conversation_id, peer_identity=env.sender_identity,
            role=PakeRole.RESPONDER, mode="direct", phase=Phase.AWAIT_SECRET,
            created_at=now, updated_at=now, is_renewal=True, renewal_counter=counter,
        )
        record._own_pk = self.public_key
        record._seen.add(int(env.flow_type))
        self.sessions[record.conversation_id] = record
        return self._respond(record, flow_a, self._chain_scalar(entry.chain_key, counter))

    def _parse_flow(self, payload: bytes, sender: str) -> FlowMessage:
        flow = FlowMessage.from_bytes(payload, self.params.spec)
        if flow.identity != sender:
            raise ProtocolError("flow identity does not match envelope sender")
        return flow

    def _respond(self, record: SessionRecord, flow_a: FlowMessage,
                 pi: PasswordScalar) -> HandleResult:
        record.phase = Phase.FLOW_RECEIVED
        record.updated_at = self._now()
        record.peer_pk = flow_a.pk
        state, flow_b = pake_start(self.params, PakeRole.RESPONDER, pi,
                                   self.identity, record._own_pk, self.rng)
        record._state = state
        record._own_flow = flow_b
        record._peer_flow = flow_a
        record.session_id = compute_sid([flow_a, flow_b])
        sk = pake_finish(state, flow_a, self.identity, flow_a.identity)
        record._bundle = derive_key_bundle(sk)
        own_tag = self._tag_for(record, TagDirection.FROM_B)
        record.phase = Phase.AWAIT_TAG
        # own outbound flow types go into _seen so reflected copies are swallowed
        record._seen.add(int(FlowType.FLOW2))
        record._seen.add(int(FlowType.TAG_B))
        outbound = [
            self._envelope(FlowType.FLOW2, record, flow_b.to_bytes()),
            self._envelope(FlowType.TAG_B, record, own_tag.tag),
        ]
        return HandleResult(record, outbound)

    def _responder_dispatch(self, record, env, secret, mode,
                            expected_peer_pk) -> HandleResult:
        if env.flow_type is FlowType.TAG_A and record.phase is Phase.AWAIT_TAG:
            record._seen.add(int(env.flow_type))
            return self._verify_peer_tag(record, env.payload, TagDirection.FROM_A)
        if record.phase is Phase.AWAIT_SECRET:
            # only duplicates of the first flow are plausible here
            raise ProtocolError(f"unexpected {env.flow_type.name} while awaiting secret")
        raise ProtocolError(
            f"unexpected {env.flow_type.name} in phase {record.phase.value}"
        )

    # initiator paths

    def _initiator_dispatch(self, record: SessionRecord, env: Envelope) -> HandleResult:
        if env.flow_type is FlowType.FLOW2:
            if record.phase is not Phase.FLOW_SENT:
                raise ProtocolError(f"FLOW2 in phase {record.phase.value}")
            record._seen.add(int(env.flow_type))
            return self._process_flow2(record, env)
        if env.flow_type is FlowType.TAG_B:
            if record.phase is Phase.FLOW_SENT:
                # tag overtook the flow on the at-least-once carrier; park it
                record._buffered.append(env)
                return HandleResult(record, [])
            if record.phase is Phase.AWAIT_TAG:
                record._seen.add(int(env.flow_type))
                return self._verify_peer_tag(record, env.payload, TagDirection.FROM_B)
        raise ProtocolError(
            f"unexpected {env.flow_type.name} in phase {record.phase.value}"
        )

    def _process_flow2(self, record: SessionRecord, env: Envelope) -> HandleResult:
        if env.sender_identity != record.peer_identity:
            raise ProtocolError("FLOW2 sender does not match the session peer")
        flow_b = self._parse_flow(env.payload, env.sender_identity)
        record.phase = Phase.FLOW_RECEIVED
        record.updated_at = self._now()
        record.peer_pk = flow_b.pk
        record._peer_flow = flow_b
        record.session_id = compute_sid([record._own_flow, flow_b])
        sk = pake_finish(record._state, flow_b, self.identity, record.peer_identity)
        record._bundle = derive_key_bundle(sk)
        own_tag = self._tag_for(record, TagDirection.FROM_A)
        record.phase = Phase.AWAIT_TAG
        record._seen.add(int(FlowType.TAG_A))
        outbound = [self._envelope(FlowType.TAG_A, record, own_tag.tag)]
        result = HandleResult(record, outbound)
        # drain a tag that arrived before the flow
        if record._buffered:
            buffered = record._buffered.pop(0)
            record._seen.add(int(buffered.flow_type))
            inner = self._verify_peer_tag(record, buffered.payload, TagDirection.FROM_B)
            result = HandleResult(record, outbound + inner.outbound, inner.outcome)
        return result

    # shared confirmation path

    def _tag_for(self, record: SessionRecord, direction: TagDirection) -> ConfirmationTag:
        key = (record._bundle.mac_key_a if direction is TagDirection.FROM_A
               else record._bundle.mac_key_b)
        if record.mode == "embedded":
            return compute_tag_embedded(key, record.session_id, direction)
        if record.role is PakeRole.INITIATOR:
            fpr_a, fpr_b = fingerprint(record._own_pk), fingerprint(record.peer_pk)
        else:
            fpr_a, fpr_b = fingerprint(record.peer_pk), fingerprint(record._own_pk)
        return compute_tag(key, fpr_a, fpr_b, record.session_id, direction)

    def _verify_peer_tag(self, record: SessionRecord, tag_bytes: bytes,
                         direction: TagDirection) -> HandleResult:
        record.tag_verifications += 1
        expected = self._tag_for(record, direction)
        try:
            verify_peer_tag(expected, ConfirmationTag(tag_bytes, direction))
        except AuthenticationFailed:
            return HandleResult(record, [], self._abort_auth_failed(record))
        return HandleResult(record, [], self._accept(record))

    def _accept(self, record: SessionRecord) -> SessionOutcome:
        if record._expected_peer_pk is not None and record.peer_pk != record._expected_peer_pk:
            # tag verified, but the authenticated key disagrees with the pin
            return self._abort_pinned_mismatch(record)
        record.phase = Phase.ACCEPTED
        record.updated_at = self._now()
        record.established_key = record._bundle
        peer_fpr = fingerprint(record.peer_pk)
        chain_key = kdf(record._bundle.session_key, CHAIN_ROOT_LABEL)
        counter = record.renewal_counter if record.is_renewal else 0
        self.store.record_authenticated(record.peer_identity, peer_fpr,
                                        chain_key, counter)
        record.chain_counter = counter
        record.failed_attempts = 0
        if record._new_own_pk is not None:
            self.public_key = record._new_own_pk
        return SessionOutcome("accepted", peer_fpr, record._bundle.session_key)

    def _abort_pinned_mismatch(self, record: SessionRecord) -> SessionOutcome:
        record.phase = Phase.ABORTED
        record.abort_reason = ABORT_PROTOCOL
        record.established_key = None
        record._bundle.destroy()
        return SessionOutcome("auth-failed", fingerprint(record.peer_pk))

    def _abort_auth_failed(self, record: SessionRecord) -> SessionOutcome:
        record.phase = Phase.ABORTED
        record.abort_reason = ABORT_AUTH_FAILED
        record.updated_at = self._now()
        if record._bundle is not None:
            record._bundle.destroy()
        record.established_key = None
        if record.is_renewal:
            # a renewal secret is full entropy: a mismatch is an incident,
            # not a password guess, and must not lock the peer out
            log.warning("renewal key confirmation failed with %s (chain retained)",
                        record.peer_identity)
        else:
            record.failed_attempts = self.store.record_failure(record.peer_identity)
        return SessionOutcome("auth-failed")

    # -- timeouts and cleanup ----------------------------------------------

    def timeout_session(self, conversation_id: bytes) -> SessionRecord:
        """Mark a stalled session as timed out. Never counts as a guess."""
        record = self.sessions[conversation_id]
        if record.phase not in TERMINAL:
            record.phase = Phase.ABORTED
            record.abort_reason = ABORT_TIMEOUT
            record.updated_at = self._now()
            if record._bundle is not None:
                record._bundle.destroy()
            record.established_key = None
        return record

    def drop_session(self, conversation_id: bytes):
        """Forget a session and zeroize any key material it still holds."""
        record = self.sessions.pop(conversation_id, None)
        if record is not None and record._bundle is not None:
            record._bundle.destroy()
            record.established_key = None
