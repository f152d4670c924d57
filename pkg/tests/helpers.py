"""Shared test machinery: deterministic rngs, forced-coin handshakes, and a
tiny-group parameter set matching the hand-computed vectors (M = g^2 = 4,
N = g^5 = 9)."""

import random

from pake_authkit import (PakeRole, PasswordScalar, PublicParams, Scalar,
                          TINY23, compute_sid, compute_tag, derive_key_bundle,
                          pake_finish, pake_start, verify_peer_tag)
from pake_authkit.confirm import TagDirection
from pake_authkit.errors import AuthenticationFailed
from pake_authkit.trustwords import fingerprint

TINY_VECTOR_PARAMS = PublicParams(TINY23, TINY23.element(4), TINY23.element(9))


def tiny_default_params() -> PublicParams:
    return PublicParams.default(TINY23)


class ByteQueueRng:
    """randbytes() source that yields queued integers as fixed-width values;
    lets tests force specific scalars through the public sampling path."""

    def __init__(self, values):
        self.values = list(values)

    def randbytes(self, n: int) -> bytes:
        if not self.values:
            raise AssertionError("rng queue exhausted")
        return self.values.pop(0).to_bytes(n, "big")


def seeded_rng(seed: int = 0) -> random.Random:
    return random.Random(seed)


def run_exchange(params, pi_a: int, pi_b: int, x: int, y: int,
                 id_a: str = "A", id_b: str = "B",
                 pk_a: bytes = b"alice-key", pk_b: bytes = b"bob-key"):
    """One full exchange plus confirmation with forced coins.

    Returns (sk_a, sk_b, a_accepts, b_accepts).
    """
    sa, flow_a = pake_start(params, PakeRole.INITIATOR, PasswordScalar(Scalar(pi_a)),
                            id_a, pk_a, coin=Scalar(x))
    sb, flow_b = pake_start(params, PakeRole.RESPONDER, PasswordScalar(Scalar(pi_b)),
                            id_b, pk_b, coin=Scalar(y))
    sk_a = pake_finish(sa, flow_b, id_a, id_b)
    sk_b = pake_finish(sb, flow_a, id_b, id_a)

    sid = compute_sid([flow_a, flow_b])
    fpr_a, fpr_b = fingerprint(pk_a), fingerprint(pk_b)
    bundle_a = derive_key_bundle(sk_a)
    bundle_b = derive_key_bundle(sk_b)
    tag_a = compute_tag(bundle_a.mac_key_a, fpr_a, fpr_b, sid, TagDirection.FROM_A)
    tag_b = compute_tag(bundle_b.mac_key_b, fpr_a, fpr_b, sid, TagDirection.FROM_B)

    def check(expected, received) -> bool:
        try:
            verify_peer_tag(expected, received)
            return True
        except AuthenticationFailed:
            return False

    a_ok = check(
        compute_tag(bundle_a.mac_key_b, fpr_a, fpr_b, sid, TagDirection.FROM_B), tag_b
    )
    b_ok = check(
        compute_tag(bundle_b.mac_key_a, fpr_a, fpr_b, sid, TagDirection.FROM_A), tag_a
    )
    return sk_a.sk, sk_b.sk, a_ok, b_ok
