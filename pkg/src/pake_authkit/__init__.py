"""Peer authentication from shared low-entropy secrets.

Two peers who share nothing but a short memorable secret authenticate each
other's public keys over untrusted asynchronous transport: a blinded
one-round exchange turns the secret into a strong shared key, and a
refresh-then-MAC confirmation step binds both public keys to it. The
package also ships the word-list comparison baseline this replaces and an
estimator for the partial-preimage attack against users who only compare
part of a fingerprint.
"""

from .attack_lab import (AttackEstimate, AttackParams, attack_effort,
                         count_partial_preimages, oracle_enumerate,
                         oracle_enumerate_masked, q_no_preimage,
                         simulate_lazy_attack)
from .confirm import (ConfirmationTag, KeyBundle, SessionId, TagDirection,
                      compose_embedded_secret, compute_sid, compute_tag,
                      compute_tag_embedded, derive_key_bundle, verify_peer_tag)
from .errors import (AuthenticationFailed, BusySession, CarrierError,
                     MalformedEnvelope, NoChainRoot, PakeAuthError,
                     PeerLockedOut, ProtocolError, RelayFull, TransportError,
                     UsageError)
from .group import (GROUPS, P256, TINY23, GroupElement, GroupSpec, Scalar,
                    div, elem_pow, g_pow, mul, random_scalar)
from .pake import (EphemeralState, FlowMessage, PakeRole, PasswordScalar,
                   PublicParams, RawSharedSecret, derive_password_scalar,
                   normalize_secret, pake_finish, pake_start)
from .session import (HandleResult, PeerTrustStore, Phase, SessionManager,
                      SessionOutcome, SessionRecord, default_params,
                      enforce_guess_budget)
from .transport import (Envelope, FlowType, MailboxAddress, RelayClient,
                        decode_envelope, encode_envelope, from_attachment,
                        read_attachment_blocks, relay_fetch, relay_post,
                        scan_for_secrets, to_attachment)
from .trustwords import (Dictionary, Fingerprint, TrustwordList, fingerprint,
                         trustwords, xor_fingerprints)

__version__ = "0.1.0"
