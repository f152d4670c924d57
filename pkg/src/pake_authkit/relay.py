"""Untrusted store-and-forward buffer server.

Mailboxes are opaque append-only queues keyed by a 32-byte id. The server
never parses what it stores beyond size checks — by design it learns nothing
from transcripts, and anyone can run their own instance. Durability comes
from a write-ahead journal per mailbox: a post is acknowledged only after
fsync, and a torn tail record from a crash is dropped on reload.
"""

from __future__ import annotations

import os
import socketserver
import threading
import time
import zlib
from dataclasses import dataclass, field

from .errors import RelayFull, TransportError
from .framing import U32, U64, Cursor, lp
from .transport import (MAILBOX_ID_LEN, MAX_ENVELOPE_BYTES, OP_FETCH, OP_POST,
                        STATUS_BAD_REQUEST, STATUS_FULL, STATUS_OK)

DEFAULT_QUOTA_BYTES = 4 * 1024 * 1024
DEFAULT_RETENTION_SECONDS = 30 * 24 * 3600


@dataclass
class RelayConfig:
    bind: str = "127.0.0.1:0"
    storage_dir: str = "relay-data"
    quota_bytes: int = DEFAULT_QUOTA_BYTES
    retention_seconds: int = DEFAULT_RETENTION_SECONDS
    clock: object = field(default=time.time, repr=False)

    @classmethod
    def from_env(cls, environ=None, **overrides) -> "RelayConfig":
        env = os.environ if environ is None else environ
        cfg = cls(
            bind=env.get("RELAY_BIND", cls.bind),
            storage_dir=env.get("RELAY_DIR", cls.storage_dir),
            quota_bytes=int(env.get("RELAY_QUOTA", DEFAULT_QUOTA_BYTES)),
            retention_seconds=int(env.get("RELAY_RETENTION", DEFAULT_RETENTION_SECONDS)),
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg


@dataclass(frozen=True)
class StoredEntry:
    seq: int
    blob: bytes
    received_at: int


class Mailbox:
    """One append-only journal: records of u32 length + body + crc32(body),
    body = seq u64 | received_at u64 | blob."""

    def __init__(self, path: str, quota_bytes: int):
        self.path = path
        self.quota_bytes = quota_bytes
        self.entries: list[StoredEntry] = []
        self.next_seq = 1
        self.lock = threading.Lock()
        self._load()

    def _load(self):
        if not os.path.exists(self.path):
            return
        with open(self.path, "rb") as fh:
            data = fh.read()
        pos = 0
        good = 0
        while pos + 4 <= len(data):
            (length,) = U32.unpack(data[pos : pos + 4])
            end = pos + 4 + length + 4
            if length < 16 or end > len(data):
                break
            body = data[pos + 4 : pos + 4 + length]
            (crc,) = U32.unpack(data[pos + 4 + length : end])
            if zlib.crc32(body) != crc:
                break
            cur = Cursor(body)
            seq = cur.u64()
            received_at = cur.u64()
            blob = cur.take(cur.remaining())
            self.entries.append(StoredEntry(seq, blob, received_at))
            self.next_seq = max(self.next_seq, seq + 1)
            good = end
            pos = end
        if good < len(data):
            # torn tail from a crash mid-write; drop it
            with open(self.path, "r+b") as fh:
                fh.truncate(good)

    def stored_bytes(self) -> int:
        return sum(len(e.blob) for e in self.entries)

    def append(self, blob: bytes, now: int) -> int:
        with self.lock:
            if self.stored_bytes() + len(blob) > self.quota_bytes:
                raise RelayFull(f"mailbox quota of {self.quota_bytes} bytes exceeded")
            seq = self.next_seq
            body = U64.pack(seq) + U64.pack(now) + blob
            record = U32.pack(len(body)) + body + U32.pack(zlib.crc32(body))
            with open(self.path, "ab") as fh:
                fh.write(record)
                fh.flush()
                os.fsync(fh.fileno())
            self.entries.append(StoredEntry(seq, blob, now))
            self.next_seq = seq + 1
            return seq

    def after(self, after_seq: int, now: int, retention: int) -> list[StoredEntry]:
        with self.lock:
            return [
                e for e in self.entries
                if e.seq > after_seq and now - e.received_at <= retention
            ]

    def gc(self, now: int, retention: int) -> int:
        """Drop entries past retention; returns how many were collected."""
        with self.lock:
            keep = [e for e in self.entries if now - e.received_at <= retention]
            dropped = len(self.entries) - len(keep)
            if dropped:
                self.entries = keep
                tmp = self.path + ".tmp"
                with open(tmp, "wb") as fh:
                    for e in keep:
                        body = U64.pack(e.seq) + U64.pack(e.received_at) + e.blob
                        fh.write(U32.pack(len(body)) + body + U32.pack(zlib.crc32(body)))
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, self.path)
            return dropped


class MailboxStore:
    """All mailboxes of one relay instance, lazily loaded from disk."""

    def __init__(self, config: RelayConfig):
        self.config = config
        os.makedirs(config.storage_dir, exist_ok=True)
        self._boxes: dict[bytes, Mailbox] = {}
        self._lock = threading.Lock()

    def _path(self, mailbox_id: bytes) -> str:
        return os.path.join(self.config.storage_dir, mailbox_id.hex() + ".journal")

    def _get(self, mailbox_id: bytes, create: bool) -> Mailbox | None:
        with self._lock:
            box = self._boxes.get(mailbox_id)
            if box is None:
                path = self._path(mailbox_id)
                if not create and not os.path.exists(path):
                    return None
                box = Mailbox(path, self.config.quota_bytes)
                self._boxes[mailbox_id] = box
            return box

    def handle_post(self, mailbox_id: bytes, blob: bytes) -> int:
        """Append opaque bytes; the server never decodes them."""
        if len(blob) > MAX_ENVELOPE_BYTES:
            raise TransportError(f"blob of {len(blob)} bytes exceeds maximum")
        box = self._get(mailbox_id, create=True)
        return box.append(blob, int(self.config.clock()))

    def handle_fetch(self, mailbox_id: bytes, after_seq: int) -> list[StoredEntry]:
        """Entries after the cursor; unknown mailboxes yield an empty list so
        fetches cannot probe for existence."""
        box = self._get(mailbox_id, create=False)
        if box is None:
            return []
        return box.after(after_seq, int(self.config.clock()), self.config.retention_seconds)

    def gc(self) -> int:
        now = int(self.config.clock())
        return sum(
            box.gc(now, self.config.retention_seconds) for box in list(self._boxes.values())
        )


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        while True:
            try:
                header = self._read_exact(4)
            except ConnectionError:
                return
            if header is None:
                return
            (length,) = U32.unpack(header)
            if length > MAX_ENVELOPE_BYTES + 64:
                self._respond(STATUS_BAD_REQUEST, b"request too large")
                return
            body = self._read_exact(length)
            if body is None:
                return
            try:
                status, payload = self._dispatch(body)
            except RelayFull as exc:
                status, payload = STATUS_FULL, str(exc).encode()
            except Exception as exc:  # noqa: BLE001 — server must not die on bad input
                status, payload = STATUS_BAD_REQUEST, str(exc).encode()
            self._respond(status, payload)

    def _dispatch(self, body: bytes) -> tuple[int, bytes]:
        store: MailboxStore = self.server.store
        if len(body) < 1 + MAILBOX_ID_LEN:
            return STATUS_BAD_REQUEST, b"short request"
        op = body[0]
        mailbox_id = body[1 : 1 + MAILBOX_ID_LEN]
        rest = body[1 + MAILBOX_ID_LEN :]
        if op == OP_POST:
            seq = store.handle_post(mailbox_id, rest)
            return STATUS_OK, U64.pack(seq)
        if op == OP_FETCH:
            if len(rest) != 8:
                return STATUS_BAD_REQUEST, b"bad fetch cursor"
            entries = store.handle_fetch(mailbox_id, U64.unpack(rest)[0])
            out = U32.pack(len(entries))
            for e in entries:
                out += U64.pack(e.seq) + lp(e.blob)
            return STATUS_OK, out
        return STATUS_BAD_REQUEST, f"unknown op {op}".encode()

    def _read_exact(self, n: int) -> bytes | None:
        buf = b""
        while len(buf) < n:
            chunk = self.request.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def _respond(self, status: int, payload: bytes):
        resp = bytes([status]) + payload
        try:
            self.request.sendall(U32.pack(len(resp)) + resp)
        except OSError:
            pass


class RelayServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, config: RelayConfig):
        host, _, port = config.bind.rpartition(":")
        super().__init__((host or "127.0.0.1", int(port or 0)), _Handler)
        self.config = config
        self.store = MailboxStore(config)

    @property
    def locator(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(config: RelayConfig) -> RelayServer:
    """Bind and return a relay ready to run (serve_forever / start_background)."""
    return RelayServer(config)
