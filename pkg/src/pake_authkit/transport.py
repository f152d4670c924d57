"""Wire envelopes, the email-attachment carrier, and the relay client.

Envelopes are the only thing that ever crosses the network. They carry no
secret material: the payload is either a first-round flow message (public by
design) or a confirmation tag. An automated scanner (`scan_for_secrets`)
backs that claim in the test harness.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import re
import socket
from dataclasses import dataclass
from enum import IntEnum

from .errors import CarrierError, MalformedEnvelope, RelayFull, TransportError
from .framing import U32, U64, Cursor, lp, lp_str

ENVELOPE_VERSION = 1
MAX_ENVELOPE_BYTES = 64 * 1024
MAX_IDENTITY_BYTES = 1024

ARMOR_BEGIN = "-----BEGIN PAKE-AUTH MESSAGE-----"
ARMOR_END = "-----END PAKE-AUTH MESSAGE-----"
ARMOR_WIDTH = 64


class FlowType(IntEnum):
    FLOW1 = 1      # initiator's first-round flow
    FLOW2 = 2      # responder's first-round flow
    TAG_A = 3      # initiator's confirmation tag
    TAG_B = 4      # responder's confirmation tag
    RENEWAL = 5    # chained re-authentication first flow


@dataclass(frozen=True)
class Envelope:
    flow_type: FlowType
    conversation_id: bytes
    sender_identity: str
    payload: bytes
    version: int = ENVELOPE_VERSION

    def __post_init__(self):
        if len(self.conversation_id) != 16:
            raise MalformedEnvelope("bad_conversation_id", 2, "must be 16 bytes")


def encode_envelope(env: Envelope) -> bytes:
    out = (
        bytes([env.version, env.flow_type])
        + env.conversation_id
        + lp_str(env.sender_identity)
        + lp(env.payload)
    )
    if len(out) > MAX_ENVELOPE_BYTES:
        raise MalformedEnvelope("oversize", 0, f"envelope of {len(out)} bytes")
    return out


def decode_envelope(data: bytes) -> Envelope:
    """Strict inverse of encode_envelope; never raises anything but
    MalformedEnvelope, no matter the input bytes."""
    if len(data) > MAX_ENVELOPE_BYTES:
        raise MalformedEnvelope("oversize", 0, f"{len(data)} bytes")
    cur = Cursor(data)
    version = cur.u8("version")
    if version != ENVELOPE_VERSION:
        raise MalformedEnvelope("unknown_version", 0, f"0x{version:02x}")
    ft = cur.u8("flow type")
    try:
        flow_type = FlowType(ft)
    except ValueError:
        raise MalformedEnvelope("unknown_flow_type", 1, str(ft)) from None
    conversation_id = cur.take(16, "conversation id")
    ident_raw = cur.take_lp("sender identity", limit=MAX_IDENTITY_BYTES)
    try:
        sender = ident_raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedEnvelope("bad_identity", 18, str(exc)) from None
    if not sender:
        raise MalformedEnvelope("bad_identity", 18, "empty")
    payload = cur.take_lp("payload", limit=MAX_ENVELOPE_BYTES)
    cur.expect_end()
    return Envelope(flow_type, conversation_id, sender, payload, version)


# ---------------------------------------------------------------------------
# attachment armor

_HEADER_RE = re.compile(r"^[A-Za-z][A-Za-z0-9-]*:\s")
_B64_JUNK = re.compile(r"[^A-Za-z0-9+/=]")


def to_attachment(env: Envelope) -> str:
    """Armored text block suitable for an email attachment."""
    body = base64.b64encode(encode_envelope(env)).decode("ascii")
    lines = [body[i : i + ARMOR_WIDTH] for i in range(0, len(body), ARMOR_WIDTH)]
    return "\n".join([ARMOR_BEGIN, f"Version: {ENVELOPE_VERSION}", "", *lines, ARMOR_END, ""])


def _decode_block(lines: list[str]) -> Envelope:
    b64 = []
    for line in lines:
        line = line.strip()
        if not line or _HEADER_RE.match(line):
            continue
        b64.append(_B64_JUNK.sub("", line))
    try:
        raw = base64.b64decode("".join(b64), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise CarrierError(f"invalid base64 body: {exc}") from exc
    try:
        return decode_envelope(raw)
    except MalformedEnvelope as exc:
        raise CarrierError(f"armored body is not an envelope: {exc}") from exc


def read_attachment_blocks(text: str) -> list["Envelope"]:
    """Parse every armored block in `text`, tolerating CRLF, re-wrapped lines
    and trailing whitespace from mail transit."""
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    blocks = []
    inside = False
    current: list[str] = []
    for line in lines:
        stripped = line.strip()
        if stripped == ARMOR_BEGIN:
            inside = True
            current = []
        elif stripped == ARMOR_END:
            if not inside:
                raise CarrierError("END marker without BEGIN")
            blocks.append(_decode_block(current))
            inside = False
        elif inside:
            current.append(line)
    if inside:
        raise CarrierError("missing END marker")
    return blocks


def from_attachment(text: str) -> Envelope:
    blocks = read_attachment_blocks(text)
    if not blocks:
        raise CarrierError("no armored block found")
    return blocks[0]


# ---------------------------------------------------------------------------
# relay addressing and client

MAILBOX_ID_LEN = 32


@dataclass(frozen=True)
class MailboxAddress:
    """Relay endpoint plus an unlinkable 32-byte mailbox id."""

    locator: str          # "host:port"
    mailbox_id: bytes

    @classmethod
    def for_conversation(cls, locator: str, conversation_id: bytes,
                         to_initiator: bool) -> "MailboxAddress":
        mid = hashlib.sha256(
            b"mailbox" + conversation_id + (b"\x01" if to_initiator else b"\x02")
        ).digest()
        return cls(locator, mid)

    @classmethod
    def inbox(cls, locator: str, identity: str) -> "MailboxAddress":
        """First-contact mailbox; plays the role of the recipient's mail server."""
        return cls(locator, hashlib.sha256(b"mailbox-inbox" + identity.encode("utf-8")).digest())


STATUS_OK = 0
STATUS_FULL = 1
STATUS_BAD_REQUEST = 2
STATUS_ERROR = 3

OP_POST = 1
OP_FETCH = 2


def _parse_locator(locator: str) -> tuple[str, int]:
    host, _, port = locator.rpartition(":")
    if not host or not port.isdigit():
        raise TransportError(f"bad relay locator {locator!r}, want host:port")
    return host, int(port)


class RelayClient:
    """Talks the length-prefixed relay protocol; deduplicates fetched
    envelopes by (conversation_id, flow_type)."""

    def __init__(self, locator: str, timeout: float = 5.0):
        self.locator = locator
        self.timeout = timeout
        self._seen: set[tuple[bytes, int]] = set()

    def _request(self, body: bytes) -> tuple[int, bytes]:
        host, port = _parse_locator(self.locator)
        try:
            with socket.create_connection((host, port), timeout=self.timeout) as sock:
                sock.sendall(U32.pack(len(body)) + body)
                header = self._read_exact(sock, 4)
                (length,) = U32.unpack(header)
                resp = self._read_exact(sock, length)
        except OSError as exc:
            raise TransportError(f"relay {self.locator}: {exc}") from exc
        if not resp:
            raise TransportError("empty relay response")
        return resp[0], resp[1:]

    @staticmethod
    def _read_exact(sock, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            chunk = sock.recv(n - len(buf))
            if not chunk:
                raise TransportError("relay connection closed mid-response")
            buf += chunk
        return buf

    def post_raw(self, mailbox_id: bytes, blob: bytes) -> int:
        status, body = self._request(bytes([OP_POST]) + mailbox_id + blob)
        if status == STATUS_FULL:
            raise RelayFull(body.decode("utf-8", "replace"))
        if status != STATUS_OK:
            raise TransportError(f"relay refused post: {body.decode('utf-8', 'replace')}")
        return U64.unpack(body)[0]

    def fetch_raw(self, mailbox_id: bytes, after_seq: int) -> list[tuple[int, bytes]]:
        status, body = self._request(bytes([OP_FETCH]) + mailbox_id + U64.pack(after_seq))
        if status != STATUS_OK:
            raise TransportError(f"relay refused fetch: {body.decode('utf-8', 'replace')}")
        cur = Cursor(body)
        entries = []
        count = cur.u32("entry count")
        for _ in range(count):
            seq = cur.u64("sequence")
            blob = cur.take_lp("entry")
            entries.append((seq, blob))
        return entries

    def post(self, addr: MailboxAddress, env: Envelope) -> int:
        return self.post_raw(addr.mailbox_id, encode_envelope(env))

    def fetch(self, addr: MailboxAddress, after_seq: int = 0) -> tuple[list[Envelope], int]:
        """Envelopes after `after_seq`, deduplicated; skips undecodable blobs
        (the relay is untrusted and may store anything)."""
        cursor = after_seq
        out = []
        for seq, blob in self.fetch_raw(addr.mailbox_id, after_seq):
            cursor = max(cursor, seq)
            try:
                env = decode_envelope(blob)
            except MalformedEnvelope:
                continue
            key = (env.conversation_id, int(env.flow_type))
            if key in self._seen:
                continue
            self._seen.add(key)
            out.append(env)
        return out, cursor


def relay_post(addr: MailboxAddress, env: Envelope, timeout: float = 5.0) -> int:
    return RelayClient(addr.locator, timeout).post(addr, env)


def relay_fetch(addr: MailboxAddress, since_cursor: int = 0,
                timeout: float = 5.0) -> tuple[list[Envelope], int]:
    return RelayClient(addr.locator, timeout).fetch(addr, since_cursor)


# ---------------------------------------------------------------------------
# secret-material scanner (used by the harness over transcripts and logs)


def scan_for_secrets(blob: bytes, needles: dict[str, bytes]) -> list[str]:
    """Names of the secret byte strings that appear verbatim inside blob."""
    return [name for name, needle in needles.items() if needle and needle in blob]
