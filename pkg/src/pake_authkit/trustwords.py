"""Word-list rendering of key fingerprints for manual comparison.

Two peers each compute the XOR of both 160-bit fingerprints and read the
resulting ten 16-bit blocks as words from a shared 65536-entry dictionary.
Showing only the first five words compares only the first 80 of 160 bits,
which is what makes the lazy-user attack in attack_lab worthwhile.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import UsageError

FINGERPRINT_BYTES = 20
DICT_SIZE = 1 << 16


@dataclass(frozen=True)
class Fingerprint:
    """A 160-bit public-key digest."""

    bits: bytes

    def __post_init__(self):
        if len(self.bits) != FINGERPRINT_BYTES:
            raise UsageError(
                f"fingerprint must be {FINGERPRINT_BYTES} bytes, got {len(self.bits)}"
            )

    @classmethod
    def from_hex(cls, text: str) -> "Fingerprint":
        text = text.strip().replace(" ", "")
        if len(text) != 2 * FINGERPRINT_BYTES:
            raise UsageError("fingerprint hex must be 40 characters")
        try:
            return cls(bytes.fromhex(text))
        except ValueError as exc:
            raise UsageError(f"bad fingerprint hex: {exc}") from exc

    def hex(self) -> str:
        return self.bits.hex()

    def __repr__(self):
        return f"Fingerprint({self.hex()})"


def fingerprint(public_key: bytes) -> Fingerprint:
    """20-byte digest of a canonical public-key encoding (SHA-256 truncated)."""
    return Fingerprint(hashlib.sha256(public_key).digest()[:FINGERPRINT_BYTES])


class Dictionary:
    """An ordered list of exactly 65536 unique words.

    File format: UTF-8, one word per line, line number == word index.
    """

    def __init__(self, words: list[str], language_tag: str = ""):
        if len(words) != DICT_SIZE:
            raise UsageError(f"dictionary needs {DICT_SIZE} words, got {len(words)}")
        if len(set(words)) != DICT_SIZE:
            raise UsageError("dictionary entries must be unique")
        self.words = words
        self.language_tag = language_tag

    @classmethod
    def load(cls, path, language_tag: str = "") -> "Dictionary":
        with open(path, encoding="utf-8") as fh:
            words = [line.rstrip("\n") for line in fh]
        if words and words[-1] == "":
            words.pop()
        return cls(words, language_tag or str(path))

    @classmethod
    def hex_test(cls) -> "Dictionary":
        """Built-in test dictionary: word i is the zero-padded hex string of i."""
        return cls([f"{i:04x}" for i in range(DICT_SIZE)], "hex-test")

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.words) + "\n")


@dataclass(frozen=True)
class TrustwordList:
    words: tuple[str, ...]
    indices: tuple[int, ...]

    def __str__(self):
        return " ".join(self.words)


def xor_fingerprints(a: Fingerprint, b: Fingerprint) -> Fingerprint:
    """Bitwise XOR; commutative, and zero when the fingerprints agree."""
    return Fingerprint(bytes(x ^ y for x, y in zip(a.bits, b.bits)))


def trustwords(a: Fingerprint, b: Fingerprint, dictionary: Dictionary,
               count: int = 10) -> TrustwordList:
    """Map the XOR of two fingerprints to `count` words.

    The 160-bit XOR splits into ten big-endian 16-bit blocks (leftmost block
    first), each indexing the dictionary. count=5 returns the first five
    words, i.e. exactly the first 80 bits.
    """
    if count not in (5, 10):
        raise UsageError("count must be 5 or 10")
    mixed = xor_fingerprints(a, b).bits
    indices = tuple(
        int.from_bytes(mixed[2 * i : 2 * i + 2], "big") for i in range(10)
    )[:count]
    return TrustwordList(tuple(dictionary.words[i] for i in indices), indices)
