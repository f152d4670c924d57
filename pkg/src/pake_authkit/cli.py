"""Command-line surface.

Subcommands: auth (init|respond|status), renew, estimate, trustwords,
relay-serve, simulate, reset-lockout.

Exit codes: 0 success, 1 authentication failed, 2 transport error or
timeout, 3 usage error. Secrets are read from an interactive prompt or a
file descriptor, never from argv (argv leaks into shell history and the
process table).
"""

from __future__ import annotations

import argparse
import getpass
import hashlib
import importlib.resources
import os
import re
import secrets as _secrets
import sys
import time

from .attack_lab import AttackParams, attack_effort
from .adversary import guess_and_abort, mitm_key_substitution, parse_scenario, run_scenario
from .errors import (AuthenticationFailed, CarrierError, PakeAuthError,
                     PeerLockedOut, TransportError, UsageError)
from .pake import PakeRole
from .relay import RelayConfig, serve
from .session import (DEFAULT_MAX_ATTEMPTS, PeerTrustStore, SessionManager,
                      enforce_guess_budget)
from .transport import (Envelope, FlowType, MailboxAddress, RelayClient,
                        read_attachment_blocks, to_attachment)
from .trustwords import Dictionary, Fingerprint, trustwords as render_trustwords

EXIT_OK = 0
EXIT_AUTH_FAILED = 1
EXIT_TRANSPORT = 2
EXIT_USAGE = 3

SECRET_PROMPT = ("Shared secret (agree on it out of band; "
                 "never send it in the email body itself): ")

ENV_PREFIX = "PAKE_AUTH_"
CONFIG_KEYS = ("identity", "key_file", "trust_store", "relay", "dictionary",
               "max_attempts")


class _Parser(argparse.ArgumentParser):
    # the spec'd usage-error exit code is 3, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


class CliConfig:
    """identity/key/trust-store settings from file, environment and flags."""

    def __init__(self, args):
        values = {}
        config_path = getattr(args, "config", None)
        if config_path:
            values.update(self._read_file(config_path))
        for key in CONFIG_KEYS:
            env = os.environ.get(ENV_PREFIX + key.upper())
            if env is not None:
                values[key] = env
            flag = getattr(args, key, None)
            if flag is not None:
                values[key] = flag
        base = os.environ.get(ENV_PREFIX + "HOME",
                              os.path.join(os.path.expanduser("~"), ".pake-authkit"))
        self.identity = values.get("identity", "")
        self.key_file = values.get("key_file", os.path.join(base, "key.hex"))
        self.trust_store = values.get("trust_store", os.path.join(base, "trust.journal"))
        self.relay = values.get("relay", "127.0.0.1:7953")
        self.dictionary = values.get("dictionary")
        self.max_attempts = int(values.get("max_attempts", DEFAULT_MAX_ATTEMPTS))

    @staticmethod
    def _read_file(path) -> dict:
        values = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
        return values

    def require_identity(self) -> str:
        if not self.identity:
            raise UsageError("no identity configured (flag --identity, config file, "
                             f"or {ENV_PREFIX}IDENTITY)")
        return self.identity

    def load_key(self) -> bytes:
        """Own public key bytes; generated and persisted on first use."""
        if os.path.exists(self.key_file):
            with open(self.key_file, encoding="utf-8") as fh:
                return bytes.fromhex(fh.read().strip())
        key = _secrets.token_bytes(32)
        os.makedirs(os.path.dirname(self.key_file) or ".", exist_ok=True)
        with open(self.key_file, "w", encoding="utf-8") as fh:
            fh.write(key.hex() + "\n")
        return key

    def open_store(self) -> PeerTrustStore:
        os.makedirs(os.path.dirname(self.trust_store) or ".", exist_ok=True)
        return PeerTrustStore(self.trust_store)


def read_secret(args) -> str:
    if getattr(args, "secret", None) is not None:
        # never accept secrets via argv
        raise UsageError("refusing --secret on the command line; "
                         "use --secret-fd or the interactive prompt")
    fd = getattr(args, "secret_fd", None)
    if fd is not None:
        with os.fdopen(os.dup(fd), encoding="utf-8") as fh:
            return fh.readline().rstrip("\n")
    return getpass.getpass(SECRET_PROMPT)


# ---------------------------------------------------------------------------
# carriers


class RelayCarrier:
    """Posts and polls conversation mailboxes on the buffer server."""

    def __init__(self, locator: str, identity: str):
        self.client = RelayClient(locator)
        self.identity = identity
        self.cursors: dict[bytes, int] = {}
        self.watched: dict[bytes, MailboxAddress] = {}
        inbox = MailboxAddress.inbox(locator, identity)
        self.watched[inbox.mailbox_id] = inbox
        self.locator = locator

    def send(self, env: Envelope, peer: str, as_initiator: bool):
        if env.flow_type in (FlowType.FLOW1, FlowType.RENEWAL):
            addr = MailboxAddress.inbox(self.locator, peer)
        else:
            addr = MailboxAddress.for_conversation(
                self.locator, env.conversation_id, to_initiator=not as_initiator
            )
        self.client.post(addr, env)
        # watch the reverse direction of this conversation
        reverse = MailboxAddress.for_conversation(
            self.locator, env.conversation_id, to_initiator=as_initiator
        )
        self.watched[reverse.mailbox_id] = reverse

    def watch_conversation(self, conversation_id: bytes, as_initiator: bool):
        addr = MailboxAddress.for_conversation(
            self.locator, conversation_id, to_initiator=as_initiator
        )
        self.watched[addr.mailbox_id] = addr

    def poll(self) -> list[Envelope]:
        out = []
        for addr in list(self.watched.values()):
            cursor = self.cursors.get(addr.mailbox_id, 0)
            envs, cursor = self.client.fetch(addr, cursor)
            self.cursors[addr.mailbox_id] = cursor
            out.extend(envs)
        return out


class FileCarrier:
    """Shared-directory carrier; each envelope is one armored text file."""

    def __init__(self, directory: str, identity: str):
        self.directory = directory
        self.identity = identity
        self.consumed: set[str] = set()
        os.makedirs(directory, exist_ok=True)

    @staticmethod
    def _slug(name: str) -> str:
        return re.sub(r"[^A-Za-z0-9._-]", "_", name)

    def send(self, env: Envelope, peer: str, as_initiator: bool):
        digest = hashlib.sha256(env.payload).hexdigest()[:8]
        name = f"{time.time_ns()}_{digest}_to_{self._slug(peer)}.pakemsg"
        path = os.path.join(self.directory, name)
        with open(path + ".tmp", "w", encoding="utf-8") as fh:
            fh.write(to_attachment(env))
        os.replace(path + ".tmp", path)

    def poll(self) -> list[Envelope]:
        marker = f"_to_{self._slug(self.identity)}.pakemsg"
        out = []
        for name in sorted(os.listdir(self.directory)):
            if not name.endswith(marker) or name in self.consumed:
                continue
            self.consumed.add(name)
            try:
                with open(os.path.join(self.directory, name), encoding="utf-8") as fh:
                    out.extend(read_attachment_blocks(fh.read()))
            except (OSError, CarrierError) as exc:
                print(f"warning: skipping {name}: {exc}", file=sys.stderr)
        return out


def _make_carrier(args, config: CliConfig):
    if args.carrier == "relay":
        return RelayCarrier(config.relay, config.require_identity())
    if not args.mailbox:
        raise UsageError("file carrier needs --mailbox DIR")
    return FileCarrier(args.mailbox, config.require_identity())


# ---------------------------------------------------------------------------
# auth


def _print_outcome(outcome, peer: str) -> int:
    if outcome.accepted:
        print(f"peer fingerprint: {outcome.peer_fingerprint.hex()}")
        print(f"{peer}: AUTHENTICATED")
        return EXIT_OK
    print(f"{peer}: AUTHENTICATION FAILED — the secrets did not match "
          "(this is a verified mismatch, not a network failure)")
    return EXIT_AUTH_FAILED


def _auth_loop(manager: SessionManager, carrier, args, peer: str,
               as_initiator: bool, secret=None, mode: str = "direct",
               expected_peer_pk: bytes | None = None) -> int:
    deadline = time.monotonic() + args.timeout
    while time.monotonic() < deadline:
        for env in carrier.poll():
            try:
                result = manager.handle_envelope(
                    env, secret=secret, mode=mode, expected_peer_pk=expected_peer_pk
                )
            except PeerLockedOut as exc:
                print(f"refused: {exc}", file=sys.stderr)
                return EXIT_AUTH_FAILED
            except PakeAuthError as exc:
                print(f"warning: ignored envelope: {exc}", file=sys.stderr)
                continue
            for out in result.outbound:
                carrier.send(out, result.record.peer_identity,
                             as_initiator=result.record.role is PakeRole.INITIATOR)
            if result.outcome is not None:
                return _print_outcome(result.outcome, result.record.peer_identity)
        time.sleep(args.poll)
    print(f"{peer}: TIMEOUT — no verdict (network failure or a dropped run; "
          "this does not count as a failed attempt)")
    return EXIT_TRANSPORT


def cmd_auth(args) -> int:
    config = CliConfig(args)
    if args.action == "status":
        return cmd_status(args, config)
    identity = config.require_identity()
    manager = SessionManager(identity, config.load_key(),
                             store=config.open_store(),
                             max_attempts=config.max_attempts)
    carrier = _make_carrier(args, config)

    expected_pk = None
    if args.expected_peer_key:
        expected_pk = _read_key_arg(args.expected_peer_key)

    if args.action == "init":
        if not args.peer:
            raise UsageError("auth init needs --peer")
        secret = read_secret(args)
        record, first = manager.start_session(args.peer, secret, args.mode,
                                              expected_pk)
        carrier.send(first, args.peer, as_initiator=True)
        if isinstance(carrier, RelayCarrier):
            carrier.watch_conversation(record.conversation_id, as_initiator=True)
        print(f"first flow sent to {args.peer}; waiting for the response...")
        return _auth_loop(manager, carrier, args, args.peer, True)

    # respond: wait for a first flow (or renewal), answer it, wait for the tag
    secret = None
    if not args.renewals_only:
        secret = read_secret(args)
    print("waiting for an incoming authentication...")
    return _auth_loop(manager, carrier, args, args.peer or "peer", False,
                      secret=secret, mode=args.mode,
                      expected_peer_pk=expected_pk)


def _read_key_arg(value: str) -> bytes:
    if os.path.exists(value):
        with open(value, encoding="utf-8") as fh:
            return bytes.fromhex(fh.read().strip())
    try:
        return bytes.fromhex(value)
    except ValueError as exc:
        raise UsageError(f"--expected-peer-key must be hex or a key file: {exc}") from exc


def cmd_status(args, config: CliConfig | None = None) -> int:
    config = config or CliConfig(args)
    store = config.open_store()
    peers = [args.peer] if args.peer else sorted(store.entries)
    for peer in peers:
        entry = store.entry(peer)
        failures = store.failures(peer)
        locked = enforce_guess_budget(store, peer, config.max_attempts) == "locked"
        if entry is None:
            print(f"{peer}: not authenticated "
                  f"(failures={failures}{', LOCKED' if locked else ''})")
            continue
        print(f"{peer}: fingerprint {entry.fingerprint.hex()} "
              f"chain#{entry.chain_counter} renewals={len(entry.renewals)} "
              f"failures={failures}{' LOCKED' if locked else ''}")
    return EXIT_OK


def cmd_renew(args) -> int:
    config = CliConfig(args)
    identity = config.require_identity()
    manager = SessionManager(identity, config.load_key(),
                             store=config.open_store(),
                             max_attempts=config.max_attempts)
    new_pk = _secrets.token_bytes(32) if args.new_key else None
    record, first = manager.renew_chain(args.peer, new_pk)
    carrier = _make_carrier(args, config)
    carrier.send(first, args.peer, as_initiator=True)
    if isinstance(carrier, RelayCarrier):
        carrier.watch_conversation(record.conversation_id, as_initiator=True)
    print(f"automated renewal #{record.renewal_counter} started with {args.peer}")
    code = _auth_loop(manager, carrier, args, args.peer, True)
    if code == EXIT_OK and new_pk is not None:
        with open(config.key_file, "w", encoding="utf-8") as fh:
            fh.write(new_pk.hex() + "\n")
        print("new key pair enrolled")
    return code


def cmd_reset_lockout(args) -> int:
    config = CliConfig(args)
    config.open_store().reset_lockout(args.peer)
    print(f"{args.peer}: failure counter reset")
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate / trustwords


def cmd_estimate(args) -> int:
    params = AttackParams.from_checked(args.bits, args.boundary, args.checked_middle)
    print(f"partition: b={params.b} r={params.r} l={params.l} u={params.u} t={params.t}")
    estimate = attack_effort(params, args.target_p)
    if not estimate.feasible:
        print("infeasible: every middle bit is checked (u = l); "
              "no bit can be flipped without detection")
        return EXIT_OK
    print(f"valid partial preimages per target: {estimate.valid_count}")
    print(f"q = 1 - 2^{estimate.miss_exponent:.2f} (exact: {estimate.q.numerator}/{estimate.q.denominator})")
    print(f"e = {estimate.e:.4g} attempts for success probability >= {args.target_p}")
    print(f"log2(e) = {estimate.log2_e:.2f}  (~2^{round(estimate.log2_e)})")
    return EXIT_OK


def cmd_trustwords(args) -> int:
    fpr_a = Fingerprint.from_hex(args.fpr_a)
    fpr_b = Fingerprint.from_hex(args.fpr_b)
    dictionary = Dictionary.load(args.dict) if args.dict else Dictionary.hex_test()
    words = render_trustwords(fpr_a, fpr_b, dictionary, args.count)
    if args.count == 5:
        print("warning: five words compare only the first 80 of 160 bits; "
              "a motivated forger can exploit the unchecked half", file=sys.stderr)
    print(str(words))
    return EXIT_OK


# ---------------------------------------------------------------------------
# relay / simulate


def cmd_relay_serve(args) -> int:
    config = RelayConfig.from_env(
        bind=args.bind, storage_dir=args.dir,
        quota_bytes=args.quota, retention_seconds=args.retention,
    )
    server = serve(config)
    print(f"relay listening on {server.locator} (storage: {config.storage_dir})",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def _load_scenario_text(name: str) -> str:
    if os.path.exists(name):
        with open(name, encoding="utf-8") as fh:
            return fh.read()
    resource = importlib.resources.files("pake_authkit").joinpath("scenarios", name)
    if resource.is_file():
        return resource.read_text(encoding="utf-8")
    raise UsageError(f"scenario {name!r} not found (no such file or bundled scenario)")


def cmd_simulate(args) -> int:
    scenario = parse_scenario(_load_scenario_text(args.scenario))
    if scenario.adversary == "mitm":
        trace = mitm_key_substitution(scenario)
    elif scenario.adversary == "guess_abort":
        _, trace = guess_and_abort(scenario)
    else:
        trace = run_scenario(scenario)
    sys.stdout.write(trace.to_text())
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="pake-authkit",
                     description="peer authentication from shared low-entropy secrets")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--identity")
        p.add_argument("--key-file", dest="key_file")
        p.add_argument("--trust-store", dest="trust_store")
        p.add_argument("--relay", help="relay locator host:port")
        p.add_argument("--max-attempts", dest="max_attempts", type=int)

    def add_carrier_flags(p):
        p.add_argument("--carrier", choices=("relay", "file"), default="relay")
        p.add_argument("--mailbox", help="shared directory for the file carrier")
        p.add_argument("--timeout", type=float, default=60.0)
        p.add_argument("--poll", type=float, default=0.5)
        p.add_argument("--secret", help=argparse.SUPPRESS)   # always refused
        p.add_argument("--secret-fd", dest="secret_fd", type=int,
                       help="read the secret's first line from this file descriptor")
        p.add_argument("--mode", choices=("direct", "embedded"), default="direct")
        p.add_argument("--expected-peer-key", dest="expected_peer_key",
                       help="peer key (hex or file); required for embedded init")

    p_auth = sub.add_parser("auth", help="run an authentication")
    p_auth.add_argument("action", choices=("init", "respond", "status"))
    p_auth.add_argument("--peer")
    p_auth.add_argument("--renewals-only", action="store_true",
                        help="respond only to automated renewals (no secret prompt)")
    add_config_flags(p_auth)
    add_carrier_flags(p_auth)
    p_auth.set_defaults(func=cmd_auth)

    p_renew = sub.add_parser("renew", help="automated chained re-authentication")
    p_renew.add_argument("--peer", required=True)
    p_renew.add_argument("--new-key", action="store_true",
                         help="generate and enrol a fresh key pair")
    add_config_flags(p_renew)
    add_carrier_flags(p_renew)
    p_renew.set_defaults(func=cmd_renew)

    p_reset = sub.add_parser("reset-lockout", help="clear a peer's failure counter")
    p_reset.add_argument("--peer", required=True)
    add_config_flags(p_reset)
    p_reset.set_defaults(func=cmd_reset_lockout)

    p_est = sub.add_parser("estimate", help="partial-preimage attack effort")
    p_est.add_argument("--bits", type=int, required=True)
    p_est.add_argument("--boundary", type=int, required=True)
    p_est.add_argument("--checked-middle", dest="checked_middle", type=int, required=True)
    p_est.add_argument("--target-p", dest="target_p", type=float, default=0.5)
    p_est.set_defaults(func=cmd_estimate)

    p_tw = sub.add_parser("trustwords", help="render comparison words for two fingerprints")
    p_tw.add_argument("fpr_a")
    p_tw.add_argument("fpr_b")
    p_tw.add_argument("--count", type=int, choices=(5, 10), default=10)
    p_tw.add_argument("--dict", help="dictionary file (65536 lines)")
    p_tw.set_defaults(func=cmd_trustwords)

    p_relay = sub.add_parser("relay-serve", help="run the untrusted buffer server")
    p_relay.add_argument("--bind", help="host:port (default env RELAY_BIND)")
    p_relay.add_argument("--dir", help="storage directory (default env RELAY_DIR)")
    p_relay.add_argument("--quota", type=int, help="per-mailbox byte quota")
    p_relay.add_argument("--retention", type=int, help="entry retention in seconds")
    p_relay.set_defaults(func=cmd_relay_serve)

    p_sim = sub.add_parser("simulate", help="run an adversary scenario script")
    p_sim.add_argument("scenario", help="scenario file or bundled name (mitm.scn, ...)")
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PeerLockedOut, AuthenticationFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AUTH_FAILED
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except PakeAuthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
