import random

import pytest

from pake_authkit.errors import UsageError
from pake_authkit.trustwords import (Dictionary, Fingerprint, fingerprint,
                                     trustwords, xor_fingerprints)

HEXDICT = Dictionary.hex_test()


def fp(byte: int) -> Fingerprint:
    return Fingerprint(bytes([byte]) * 20)


def rand_fp(rng) -> Fingerprint:
    return Fingerprint(rng.randbytes(20))


class TestFingerprint:
    def test_length_enforced(self):
        with pytest.raises(UsageError):
            Fingerprint(b"\x01" * 19)

    def test_hex_roundtrip(self):
        f = fp(0xAB)
        assert Fingerprint.from_hex(f.hex()) == f
        with pytest.raises(UsageError):
            Fingerprint.from_hex("zz" * 20)
        with pytest.raises(UsageError):
            Fingerprint.from_hex("abcd")

    def test_digest_of_public_key(self):
        assert fingerprint(b"some-key").bits == fingerprint(b"some-key").bits
        assert fingerprint(b"some-key") != fingerprint(b"other-key")
        assert len(fingerprint(b"k").bits) == 20


class TestXor:
    def test_self_is_zero(self):
        assert xor_fingerprints(fp(0x5A), fp(0x5A)) == fp(0)

    def test_zero_is_identity(self):
        rng = random.Random(1)
        b = rand_fp(rng)
        assert xor_fingerprints(fp(0), b) == b

    def test_bitwise(self):
        assert xor_fingerprints(fp(0xFF), fp(0xAA)) == fp(0x55)

    def test_commutative(self):
        rng = random.Random(2)
        for _ in range(50):
            a, b = rand_fp(rng), rand_fp(rng)
            assert xor_fingerprints(a, b) == xor_fingerprints(b, a)


class TestTrustwords:
    def test_equal_fingerprints_give_word_zero(self):
        rng = random.Random(3)
        f = rand_fp(rng)
        words = trustwords(f, f, HEXDICT, 10)
        assert list(words.words) == [HEXDICT.words[0]] * 10

    def test_constructed_blocks(self):
        # xor = blocks 0x0001 .. 0x000a -> words "0001" .. "000a"
        mixed = b"".join(i.to_bytes(2, "big") for i in range(1, 11))
        a = Fingerprint(mixed)
        b = fp(0)
        words = trustwords(a, b, HEXDICT, 10)
        assert list(words.words) == [f"{i:04x}" for i in range(1, 11)]
        assert words.indices == tuple(range(1, 11))

    def test_five_is_prefix_of_ten(self):
        rng = random.Random(4)
        for _ in range(25):
            a, b = rand_fp(rng), rand_fp(rng)
            five = trustwords(a, b, HEXDICT, 5)
            ten = trustwords(a, b, HEXDICT, 10)
            assert ten.words[:5] == five.words

    def test_five_exposes_exactly_first_80_bits(self):
        rng = random.Random(5)
        a, b = rand_fp(rng), rand_fp(rng)
        # changing any of the last 80 bits must not move the 5-word view
        mangled = bytearray(b.bits)
        mangled[10] ^= 0xFF
        assert trustwords(a, Fingerprint(bytes(mangled)), HEXDICT, 5) == trustwords(
            a, b, HEXDICT, 5
        )
        # changing any of the first 80 bits must move it
        mangled = bytearray(b.bits)
        mangled[0] ^= 0x80
        assert trustwords(a, Fingerprint(bytes(mangled)), HEXDICT, 5) != trustwords(
            a, b, HEXDICT, 5
        )

    def test_symmetry_randomized(self):
        rng = random.Random(6)
        for _ in range(100):
            a, b = rand_fp(rng), rand_fp(rng)
            assert trustwords(a, b, HEXDICT, 10) == trustwords(b, a, HEXDICT, 10)

    def test_single_bit_flips_exactly_one_word(self):
        rng = random.Random(7)
        a, b = rand_fp(rng), rand_fp(rng)
        base = trustwords(a, b, HEXDICT, 10).indices
        for bit in range(160):
            mangled = bytearray(a.bits)
            mangled[bit // 8] ^= 0x80 >> (bit % 8)
            flipped = trustwords(Fingerprint(bytes(mangled)), b, HEXDICT, 10).indices
            diffs = [i for i in range(10) if base[i] != flipped[i]]
            assert diffs == [bit // 16]

    def test_count_validation(self):
        with pytest.raises(UsageError):
            trustwords(fp(1), fp(2), HEXDICT, 7)


class TestDictionary:
    def test_size_enforced(self):
        with pytest.raises(UsageError):
            Dictionary(["a", "b"])

    def test_uniqueness_enforced(self):
        words = [f"w{i}" for i in range(65535)] + ["w0"]
        with pytest.raises(UsageError):
            Dictionary(words)

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "words.txt"
        HEXDICT.save(path)
        loaded = Dictionary.load(path)
        assert loaded.words == HEXDICT.words
        assert loaded.words[0x1234] == "1234"

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("one\ntwo\n", encoding="utf-8")
        with pytest.raises(UsageError):
            Dictionary.load(path)
