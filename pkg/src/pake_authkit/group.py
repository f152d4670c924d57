"""Prime-order cyclic groups, written multiplicatively.

Two instantiations ship:

* ``P256`` — the order-n subgroup of the NIST P-256 curve (cofactor 1, so the
  whole curve). Pure integer arithmetic, Jacobian coordinates. ~128-bit
  security; one scalar multiplication costs well under a millisecond.
* ``TINY23`` — the order-11 subgroup of the integers mod 23, generator 2.
  Small enough that every security property can be checked by exhaustive
  enumeration; worthless for anything but tests.

Elements carry their group so that cross-group operations fail loudly, and
every element has a single canonical fixed-length byte encoding (needed for
byte-exact transcripts).
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

from .errors import UsageError
from .framing import U32


@dataclass(frozen=True)
class Scalar:
    """An exponent; users of a group keep these reduced mod its order."""

    value: int

    def __post_init__(self):
        if self.value < 0:
            raise UsageError("scalar must be non-negative")


@dataclass(frozen=True)
class GroupElement:
    spec: "GroupSpec"
    raw: object

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return mul(self, other)

    def __truediv__(self, other: "GroupElement") -> "GroupElement":
        return div(self, other)

    def __pow__(self, s) -> "GroupElement":
        return elem_pow(self, s if isinstance(s, Scalar) else Scalar(s))

    def encode(self) -> bytes:
        return self.spec.encode(self)

    def is_identity(self) -> bool:
        return self == self.spec.identity()

    def __repr__(self):
        return f"<{self.spec.name}:{self.encode().hex()}>"


class GroupSpec:
    """Abstract prime-order cyclic group.

    Subclasses define the raw representation plus `_mul`, `_inv`, `_pow_raw`,
    `_encode_raw`, `_decode_raw` and `_is_member`; everything else (operator
    plumbing, hashing to elements, scalar sampling) is shared.
    """

    name: str
    order: int              # prime order of the group
    element_length: int     # bytes of the canonical element encoding
    scalar_length: int      # bytes of the fixed-width scalar encoding
    # whether protocol code should reject identity-element peer flows; an
    # honest identity flow has negligible probability in a real group but is
    # a certainty somewhere in an exhaustive toy-group sweep
    identity_guard: bool = True

    def generator(self) -> GroupElement:
        raise NotImplementedError

    def identity(self) -> GroupElement:
        raise NotImplementedError

    # raw-representation hooks
    def _mul(self, a, b):
        raise NotImplementedError

    def _inv(self, a):
        raise NotImplementedError

    def _pow_raw(self, a, e: int):
        raise NotImplementedError

    def _encode_raw(self, a) -> bytes:
        raise NotImplementedError

    def _decode_raw(self, data: bytes):
        raise NotImplementedError

    def _is_member(self, a) -> bool:
        raise NotImplementedError

    # shared surface
    def element(self, raw) -> GroupElement:
        return GroupElement(self, raw)

    def scalar(self, v: int) -> Scalar:
        return Scalar(v % self.order)

    def encode(self, e: GroupElement) -> bytes:
        self._check_own(e)
        out = self._encode_raw(e.raw)
        assert len(out) == self.element_length
        return out

    def decode(self, data: bytes) -> GroupElement:
        """Decode a canonical encoding; rejects non-members and non-canonical forms."""
        if len(data) != self.element_length:
            raise UsageError(
                f"{self.name}: element encoding must be {self.element_length} bytes,"
                f" got {len(data)}"
            )
        return self.element(self._decode_raw(data))

    def encode_scalar(self, s: Scalar) -> bytes:
        return s.value.to_bytes(self.scalar_length, "big")

    def hash_to_element(self, label: bytes) -> GroupElement:
        """Derive a non-identity element from a public label (try-and-increment).

        Deterministic, so fixed parameters like the blinding points M and N
        carry no hidden trapdoor structure.
        """
        ctr = 0
        while True:
            digest = hashlib.sha256(label + U32.pack(ctr)).digest()
            cand = self._element_from_digest(digest)
            if cand is not None and not cand.is_identity():
                return cand
            ctr += 1

    def _element_from_digest(self, digest: bytes) -> GroupElement | None:
        raise NotImplementedError

    def _check_own(self, *elems: GroupElement):
        for e in elems:
            if e.spec != self:
                raise UsageError(
                    f"element of group {e.spec.name!r} used with group {self.name!r}"
                )

    def __eq__(self, other):
        return isinstance(other, GroupSpec) and other.name == self.name

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"GroupSpec({self.name!r}, order={self.order})"


# ---------------------------------------------------------------------------
# operations


def g_pow(spec: GroupSpec, s: Scalar) -> GroupElement:
    """Generator raised to s; g_pow(0) is the identity."""
    return elem_pow(spec.generator(), s)


def mul(a: GroupElement, b: GroupElement) -> GroupElement:
    """Group product."""
    if a.spec != b.spec:
        raise UsageError(f"cannot multiply {a.spec.name} element by {b.spec.name} element")
    return a.spec.element(a.spec._mul(a.raw, b.raw))


def div(a: GroupElement, b: GroupElement) -> GroupElement:
    """a times the inverse of b."""
    if a.spec != b.spec:
        raise UsageError(f"cannot divide {a.spec.name} element by {b.spec.name} element")
    return a.spec.element(a.spec._mul(a.raw, a.spec._inv(b.raw)))


def elem_pow(a: GroupElement, s: Scalar) -> GroupElement:
    """a raised to s, with s reduced mod the group order."""
    return a.spec.element(a.spec._pow_raw(a.raw, s.value % a.spec.order))


def random_scalar(spec: GroupSpec, rng=None) -> Scalar:
    """Uniform scalar in [0, order).

    Draws order-bit-length + 128 extra bits and reduces, which keeps the
    modular bias below 2^-128. `rng` needs a `randbytes(n)` method
    (e.g. random.Random for reproducible tests); None uses the OS CSPRNG.
    """
    nbytes = (spec.order.bit_length() + 128 + 7) // 8
    raw = rng.randbytes(nbytes) if rng is not None else secrets.token_bytes(nbytes)
    return Scalar(int.from_bytes(raw, "big") % spec.order)


# ---------------------------------------------------------------------------
# tiny23: order-11 subgroup of Z_23*, generator 2


class Tiny23Group(GroupSpec):
    """Exhaustively enumerable toy group. Test oracle only — no security.

    The identity guard is off: every (coin, password) pair must stay runnable
    so that security properties can be checked over the whole space.
    """

    name = "tiny23"
    modulus = 23
    order = 11
    element_length = 1
    scalar_length = 1
    identity_guard = False

    # powers of 2 mod 23 == the quadratic residues mod 23
    MEMBERS = frozenset(pow(2, k, 23) for k in range(11))

    def generator(self) -> GroupElement:
        return self.element(2)

    def identity(self) -> GroupElement:
        return self.element(1)

    def _mul(self, a, b):
        return a * b % self.modulus

    def _inv(self, a):
        return pow(a, -1, self.modulus)

    def _pow_raw(self, a, e):
        return pow(a, e, self.modulus)

    def _encode_raw(self, a) -> bytes:
        return bytes([a])

    def _decode_raw(self, data: bytes):
        v = data[0]
        if v not in self.MEMBERS:
            raise UsageError(f"tiny23: byte {v} is not a subgroup member")
        return v

    def _is_member(self, a) -> bool:
        return a in self.MEMBERS

    def _element_from_digest(self, digest):
        v = int.from_bytes(digest, "big") % self.modulus
        if v in self.MEMBERS:
            return self.element(v)
        return None


# ---------------------------------------------------------------------------
# P-256 (secp256r1), cofactor 1: membership == on-curve
#
# The parameters are re-verified by the test suite: p and n prime, G on the
# curve, n*G the identity, and n inside the Hasse interval with n > (p+1+2*sqrt(p))/2,
# which forces the cofactor to 1.

_P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
_A = _P - 3
_B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
_N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
_GY = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5

_JINF = (0, 0, 0)


def _jdbl(X1, Y1, Z1, p=_P):
    # a = -3 doubling (dbl-2001-b)
    if not Y1 or not Z1:
        return _JINF
    delta = Z1 * Z1 % p
    gamma = Y1 * Y1 % p
    beta = X1 * gamma % p
    alpha = 3 * (X1 - delta) * (X1 + delta) % p
    X3 = (alpha * alpha - 8 * beta) % p
    Z3 = ((Y1 + Z1) * (Y1 + Z1) - gamma - delta) % p
    Y3 = (alpha * (4 * beta - X3) - 8 * gamma * gamma) % p
    return (X3, Y3, Z3)


def _jadd(P1, P2, p=_P):
    X1, Y1, Z1 = P1
    X2, Y2, Z2 = P2
    if not Z1:
        return P2
    if not Z2:
        return P1
    Z1Z1 = Z1 * Z1 % p
    Z2Z2 = Z2 * Z2 % p
    U1 = X1 * Z2Z2 % p
    U2 = X2 * Z1Z1 % p
    S1 = Y1 * Z2 * Z2Z2 % p
    S2 = Y2 * Z1 * Z1Z1 % p
    H = (U2 - U1) % p
    if H == 0:
        if (S2 - S1) % p == 0:
            return _jdbl(X1, Y1, Z1)
        return _JINF
    I = 4 * H * H % p
    J = H * I % p
    r = 2 * (S2 - S1) % p
    V = U1 * I % p
    X3 = (r * r - J - 2 * V) % p
    Y3 = (r * (V - X3) - 2 * S1 * J) % p
    Z3 = ((Z1 + Z2) * (Z1 + Z2) - Z1Z1 - Z2Z2) % p * H % p
    return (X3, Y3, Z3)


def _jmul(k: int, point, p=_P):
    """Scalar multiply an affine point; returns Jacobian. 4-bit window."""
    if k == 0 or point is None:
        return _JINF
    base = (point[0], point[1], 1)
    table = [_JINF, base]
    for _ in range(14):
        table.append(_jadd(table[-1], base, p))
    acc = _JINF
    top = (k.bit_length() - 1) & ~3
    for shift in range(top, -1, -4):
        if acc is not _JINF:
            acc = _jdbl(*acc, p)
            acc = _jdbl(*acc, p)
            acc = _jdbl(*acc, p)
            acc = _jdbl(*acc, p)
        nib = (k >> shift) & 15
        if nib:
            acc = _jadd(acc, table[nib], p)
    return acc


def _jaffine(P, p=_P):
    X, Y, Z = P
    if not Z:
        return None
    zi = pow(Z, p - 2, p)
    zi2 = zi * zi % p
    return (X * zi2 % p, Y * zi2 * zi % p)


class P256Group(GroupSpec):
    """NIST P-256 as a prime-order group; raw elements are affine pairs or None."""

    name = "p256"
    order = _N
    p = _P
    element_length = 33   # compressed point; all-zero for the identity
    scalar_length = 32

    def generator(self) -> GroupElement:
        return self.element((_GX, _GY))

    def identity(self) -> GroupElement:
        return self.element(None)

    def _on_curve(self, pt) -> bool:
        if pt is None:
            return True
        x, y = pt
        if not (0 <= x < _P and 0 <= y < _P):
            return False
        return (y * y - (x * x * x + _A * x + _B)) % _P == 0

    def _mul(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return _jaffine(_jadd((a[0], a[1], 1), (b[0], b[1], 1)))

    def _inv(self, a):
        if a is None:
            return None
        return (a[0], _P - a[1] if a[1] else 0)

    def _pow_raw(self, a, e):
        return _jaffine(_jmul(e, a))

    def _encode_raw(self, a) -> bytes:
        if a is None:
            return bytes(33)
        x, y = a
        return bytes([2 + (y & 1)]) + x.to_bytes(32, "big")

    def _decode_raw(self, data: bytes):
        prefix = data[0]
        if prefix == 0:
            if any(data[1:]):
                raise UsageError("p256: non-canonical identity encoding")
            return None
        if prefix not in (2, 3):
            raise UsageError(f"p256: bad point prefix 0x{prefix:02x}")
        x = int.from_bytes(data[1:], "big")
        if x >= _P:
            raise UsageError("p256: x coordinate out of range")
        rhs = (x * x * x + _A * x + _B) % _P
        y = pow(rhs, (_P + 1) // 4, _P)
        if y * y % _P != rhs:
            raise UsageError("p256: x is not on the curve")
        if (y & 1) != (prefix & 1):
            y = _P - y
        return (x, y)

    def _is_member(self, a) -> bool:
        return self._on_curve(a)

    def _element_from_digest(self, digest):
        x = int.from_bytes(digest, "big") % _P
        rhs = (x * x * x + _A * x + _B) % _P
        y = pow(rhs, (_P + 1) // 4, _P)
        if y * y % _P != rhs:
            return None
        # take the even-y point for determinism
        if y & 1:
            y = _P - y
        return self.element((x, y))


TINY23 = Tiny23Group()
P256 = P256Group()

GROUPS = {g.name: g for g in (TINY23, P256)}
