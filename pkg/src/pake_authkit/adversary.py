"""Deterministic network-adversary harness.

Parties exchange envelopes over an in-memory fabric driven by a discrete-
event scheduler; the adversary gets exactly envelope-level powers (read,
drop, delay, modify, inject) plus the ability to run the protocol herself
with her own keys and password guesses — full control of the network, no
access to endpoint memory.

Scenarios are reproducible: seeded randomness, step-counter clocks, and a
Trace whose text is byte-identical across reruns of the same script.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from .confirm import (ConfirmationTag, TagDirection, compute_sid, compute_tag,
                      derive_key_bundle, verify_peer_tag)
from .errors import PakeAuthError, UsageError
from .group import GROUPS, Scalar, elem_pow, g_pow, mul
from .pake import (FlowMessage, PakeRole, PasswordScalar, PublicParams,
                   derive_password_scalar, pake_finish, pake_start)
from .session import SessionManager, TERMINAL
from .transport import Envelope, FlowType, encode_envelope
from .trustwords import fingerprint

MAX_STEPS = 1000


def _env_desc(env: Envelope) -> str:
    digest = hashlib.sha256(encode_envelope(env)).hexdigest()[:8]
    return (f"{env.flow_type.name} conv={env.conversation_id.hex()[:8]}"
            f" from={env.sender_identity} {len(env.payload)}B #{digest}")


# ---------------------------------------------------------------------------
# link policy


@dataclass
class Rule:
    src: str
    dst: str
    action: str                 # drop | delay | modify | inject
    flow: FlowType | None = None
    param: object = None

    def matches(self, src: str, dst: str, env: Envelope) -> bool:
        return (self.src == src and self.dst == dst
                and (self.flow is None or env.flow_type is self.flow))


@dataclass
class FabricPolicy:
    """Per-link actions; also accumulates what the adversary observed."""

    rules: list = field(default_factory=list)
    observed: list = field(default_factory=list)
    guesses_tried: list = field(default_factory=list)

    def decide(self, src: str, dst: str, env: Envelope) -> list[Rule]:
        return [r for r in self.rules if r.matches(src, dst, env)]


def _corrupt_payload(env: Envelope) -> Envelope:
    if not env.payload:
        return env
    flipped = bytes([env.payload[0] ^ 0x01]) + env.payload[1:]
    return Envelope(env.flow_type, env.conversation_id, env.sender_identity, flipped)


MODIFY_TRANSFORMS = {"corrupt-payload": _corrupt_payload}


# ---------------------------------------------------------------------------
# fabric and nodes


class SimParty:
    """An honest endpoint; supplies its configured secret when prompted."""

    def __init__(self, name: str, manager: SessionManager, peer: str,
                 secret=None, mode: str = "direct", expected_peer_pk=None):
        self.name = name
        self.manager = manager
        self.peer = peer
        self.secret = secret
        self.mode = mode
        self.expected_peer_pk = expected_peer_pk
        self.protocol_errors: list[str] = []

    def receive(self, src: str, env: Envelope) -> list[tuple[str, Envelope]]:
        try:
            result = self.manager.handle_envelope(
                env, secret=self.secret, mode=self.mode,
                expected_peer_pk=self.expected_peer_pk,
            )
        except PakeAuthError as exc:
            self.protocol_errors.append(str(exc))
            return []
        return [(self.peer, out) for out in result.outbound]

    def outcomes(self) -> list[str]:
        return [rec.summary() for rec in self.manager.sessions.values()]


class Fabric:
    """Discrete-event scheduler; event order is (due step, enqueue order)."""

    def __init__(self, policy: FabricPolicy | None = None, seed: int = 0):
        self.policy = policy or FabricPolicy()
        self.rng = random.Random(seed)
        self.nodes: dict[str, object] = {}
        self.queue: list = []
        self.step = 0
        self.seq = 0
        self.lines: list[str] = []

    def clock(self) -> float:
        return float(self.step)

    def add(self, name: str, node):
        self.nodes[name] = node

    def send(self, src: str, dst: str, env: Envelope, extra_delay: int = 0):
        actions = self.policy.decide(src, dst, env)
        delay = 1 + extra_delay
        for rule in actions:
            if rule.action == "drop":
                self.lines.append(f"step {self.step}: {src}->{dst} {_env_desc(env)} DROPPED")
                return
            if rule.action == "delay":
                delay += int(rule.param)
                self.lines.append(
                    f"step {self.step}: {src}->{dst} {_env_desc(env)} DELAYED +{rule.param}"
                )
            elif rule.action == "modify":
                transform = MODIFY_TRANSFORMS.get(str(rule.param))
                if transform is None:
                    raise UsageError(f"unknown modify transform {rule.param!r}")
                env = transform(env)
                self.lines.append(
                    f"step {self.step}: {src}->{dst} {_env_desc(env)} MODIFIED {rule.param}"
                )
            elif rule.action == "inject":
                forged = Envelope(FlowType.TAG_B, env.conversation_id, src,
                                  self.rng.randbytes(32))
                self._enqueue(src, dst, forged, delay)
                self.lines.append(
                    f"step {self.step}: {src}->{dst} INJECTED {_env_desc(forged)}"
                )
        self.policy.observed.append(env)
        self._enqueue(src, dst, env, delay)

    def _enqueue(self, src, dst, env, delay):
        self.queue.append((self.step + delay, self.seq, src, dst, env))
        self.seq += 1

    def run(self):
        while self.queue and self.step < MAX_STEPS:
            self.queue.sort(key=lambda ev: (ev[0], ev[1]))
            due, _, src, dst, env = self.queue.pop(0)
            self.step = max(self.step, due)
            self.lines.append(f"step {self.step}: {src}->{dst} {_env_desc(env)} DELIVER")
            node = self.nodes.get(dst)
            if node is None:
                continue
            for next_dst, out in node.receive(src, env):
                self.send(dst, next_dst, out)
        # whatever is still open has timed out
        for name, node in self.nodes.items():
            manager = getattr(node, "manager", None)
            if manager is None:
                continue
            for cid, rec in manager.sessions.items():
                if rec.phase not in TERMINAL:
                    manager.timeout_session(cid)
                    self.lines.append(f"end: {name} session conv={cid.hex()[:8]} TIMEOUT")


@dataclass
class Trace:
    lines: list
    outcomes: dict
    adversary_tests: int = 0
    learned: bool | None = None

    def to_text(self) -> str:
        out = list(self.lines)
        out.append("--- outcomes ---")
        for name, states in self.outcomes.items():
            out.append(f"{name}: {', '.join(states) if states else '(no sessions)'}")
        out.append(f"audit: adversary password tests this run = {self.adversary_tests}")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# scenario scripts


@dataclass
class Scenario:
    secret_a: str = "letmein"
    secret_b: str = "letmein"
    mode: str = "direct"
    group: str = "p256"
    adversary: str | None = None      # None | "mitm" | "guess_abort"
    guess: str | None = None
    rules: list = field(default_factory=list)
    seed: int = 0

    def params(self) -> PublicParams:
        return PublicParams.default(GROUPS[self.group])


_FLOW_NAMES = {
    "flow1": FlowType.FLOW1, "flow2": FlowType.FLOW2,
    "taga": FlowType.TAG_A, "tagb": FlowType.TAG_B,
    "renewal": FlowType.RENEWAL,
}


def parse_scenario(text: str) -> Scenario:
    """One action per line, e.g.:

        party A secret=correct horse
        party B secret=correct horse
        adversary mitm guess=wrong
        link A->B drop flow=TagB
    """
    scenario = Scenario()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        words = line.split()
        kind = words[0]
        try:
            if kind == "party":
                name, kv = words[1], " ".join(words[2:])
                secret = _kv(kv, "secret")
                if name == "A":
                    scenario.secret_a = secret
                elif name == "B":
                    scenario.secret_b = secret
                else:
                    raise UsageError(f"unknown party {name!r}")
                mode = _kv(kv, "mode", required=False)
                if mode:
                    scenario.mode = mode
            elif kind == "adversary":
                scenario.adversary = words[1]
                scenario.guess = _kv(" ".join(words[2:]), "guess")
            elif kind == "group":
                scenario.group = words[1]
            elif kind == "seed":
                scenario.seed = int(words[1])
            elif kind == "link":
                src, _, dst = words[1].partition("->")
                action = words[2]
                rest = words[3:]
                flow = None
                param = None
                if action == "delay":
                    param = int(rest.pop(0))
                elif action == "modify":
                    param = rest.pop(0)
                for token in rest:
                    key, _, value = token.partition("=")
                    if key == "flow":
                        flow = _FLOW_NAMES[value.lower()]
                scenario.rules.append(Rule(src, dst, action, flow, param))
            else:
                raise UsageError(f"unknown directive {kind!r}")
        except (IndexError, KeyError) as exc:
            raise UsageError(f"scenario line {lineno}: cannot parse {raw!r}") from exc
    return scenario


def _kv(text: str, key: str, required: bool = True) -> str | None:
    # values may contain spaces; key=value pairs are separated by further key= tokens
    marker = key + "="
    idx = text.find(marker)
    if idx < 0:
        if required:
            raise UsageError(f"missing {key}= in scenario line")
        return None
    rest = text[idx + len(marker):]
    for other in ("secret=", "mode=", "guess="):
        if other != marker:
            cut = rest.find(other)
            if cut >= 0:
                rest = rest[:cut]
    return rest.strip()


# ---------------------------------------------------------------------------
# protocol-level adversaries


class ProtocolAdversary:
    """Runs the protocol herself with a guessed password and her own key.

    `tests_performed` counts password-membership tests: every verification
    of an honest party's tag against keys derived from the guess.
    """

    def __init__(self, params: PublicParams, guess, own_pk: bytes, rng=None):
        self.params = params
        self.own_pk = own_pk
        self.rng = rng
        if isinstance(guess, PasswordScalar):
            self.pi = guess
        else:
            self.pi = derive_password_scalar(guess, params)
        self.tests_performed = 0
        self.learned: bool | None = None


class MitmSubstitution(ProtocolAdversary):
    """Substitutes keys and blinded elements in both directions: plays
    responder 'B' toward the initiator and initiator 'A' toward the
    responder, each with her own key pair and her password guess."""

    def __init__(self, params, guess, own_pk, rng=None, withhold_tag=False,
                 engage_responder=True):
        super().__init__(params, guess, own_pk, rng)
        self.withhold_tag = withhold_tag
        self.engage_responder = engage_responder
        self.name_a = None          # victim initiator's identity
        self.name_b = None          # victim responder's identity
        self._side_a = {}           # state for the session with the initiator
        self._side_b = {}
        self.learned_a: bool | None = None
        self.learned_b: bool | None = None

    def receive(self, src: str, env: Envelope) -> list[tuple[str, Envelope]]:
        if env.flow_type is FlowType.FLOW1:
            return self._on_flow1(src, env)
        if env.flow_type is FlowType.FLOW2:
            return self._on_flow2(src, env)
        if env.flow_type is FlowType.TAG_A and src == self.name_a:
            return self._on_tag_a(env)
        if env.flow_type is FlowType.TAG_B and src == self.name_b:
            return self._on_tag_b(env)
        return []

    # session with the initiator (we impersonate the responder)
    def _on_flow1(self, src: str, env: Envelope) -> list[tuple[str, Envelope]]:
        self.name_a = src
        flow_a = FlowMessage.from_bytes(env.payload, self.params.spec)
        out = []

        # respond toward the initiator under the responder's name
        victim_peer = self.name_b or "B"
        state, flow_m = pake_start(self.params, PakeRole.RESPONDER, self.pi,
                                   victim_peer, self.own_pk, self.rng)
        sid = compute_sid([flow_a, flow_m])
        sk = pake_finish(state, flow_a, victim_peer, flow_a.identity)
        bundle = derive_key_bundle(sk)
        self._side_a = {"sid": sid, "bundle": bundle, "flow_a": flow_a,
                        "flow_m": flow_m, "conv": env.conversation_id}
        out.append((self.name_a, Envelope(FlowType.FLOW2, env.conversation_id,
                                          victim_peer, flow_m.to_bytes())))
        if not self.withhold_tag:
            out.append((self.name_a, self._tag_toward_a()))

        # open the substituted session toward the real responder
        if self.engage_responder:
            conv_b = self.rng.randbytes(16) if self.rng else bytes(16)
            state_b, flow_mb = pake_start(self.params, PakeRole.INITIATOR, self.pi,
                                          flow_a.identity, self.own_pk, self.rng)
            self._side_b = {"state": state_b, "flow_mb": flow_mb, "conv": conv_b,
                            "initiator_name": flow_a.identity}
            self.name_b = self.name_b or "B"
            out.append((self.name_b, Envelope(FlowType.FLOW1, conv_b,
                                              flow_a.identity, flow_mb.to_bytes())))
        return out

    def _tag_toward_a(self) -> Envelope:
        side = self._side_a
        tag = compute_tag(side["bundle"].mac_key_b,
                          fingerprint(side["flow_a"].pk), fingerprint(self.own_pk),
                          side["sid"], TagDirection.FROM_B)
        return Envelope(FlowType.TAG_B, side["conv"],
                        self.name_b or "B", tag.tag)

    def _on_tag_a(self, env: Envelope) -> list[tuple[str, Envelope]]:
        side = self._side_a
        if not side:
            return []
        expected = compute_tag(side["bundle"].mac_key_a,
                               fingerprint(side["flow_a"].pk), fingerprint(self.own_pk),
                               side["sid"], TagDirection.FROM_A)
        self.tests_performed += 1
        try:
            verify_peer_tag(expected, ConfirmationTag(env.payload, TagDirection.FROM_A))
            self.learned_a = True
        except PakeAuthError:
            self.learned_a = False
        self.learned = self.learned_a
        if self.learned_a and self.withhold_tag:
            # correct guess: finish the handshake and share a key with the victim
            return [(self.name_a, self._tag_toward_a())]
        return []

    # session with the responder (we impersonate the initiator)
    def _on_flow2(self, src: str, env: Envelope) -> list[tuple[str, Envelope]]:
        self.name_b = src
        side = self._side_b
        if not side or env.conversation_id != side["conv"]:
            return []
        flow_b = FlowMessage.from_bytes(env.payload, self.params.spec)
        sk = pake_finish(side["state"], flow_b, side["initiator_name"], src)
        bundle = derive_key_bundle(sk)
        side["bundle"] = bundle
        side["sid"] = compute_sid([side["flow_mb"], flow_b])
        side["flow_b"] = flow_b
        tag = compute_tag(bundle.mac_key_a,
                          fingerprint(self.own_pk), fingerprint(flow_b.pk),
                          side["sid"], TagDirection.FROM_A)
        return [(self.name_b, Envelope(FlowType.TAG_A, side["conv"],
                                       side["initiator_name"], tag.tag))]

    def _on_tag_b(self, env: Envelope) -> list[tuple[str, Envelope]]:
        side = self._side_b
        if not side or "bundle" not in side or env.conversation_id != side["conv"]:
            return []
        expected = compute_tag(side["bundle"].mac_key_b,
                               fingerprint(self.own_pk), fingerprint(side["flow_b"].pk),
                               side["sid"], TagDirection.FROM_B)
        self.tests_performed += 1
        try:
            verify_peer_tag(expected, ConfirmationTag(env.payload, TagDirection.FROM_B))
            self.learned_b = True
        except PakeAuthError:
            self.learned_b = False
        return []


# ---------------------------------------------------------------------------
# scenario execution


def _build_parties(scenario: Scenario, fabric: Fabric):
    params = scenario.params()
    rng = random.Random(scenario.seed + 1)
    pk_a = rng.randbytes(32)
    pk_b = rng.randbytes(32)
    mgr_a = SessionManager("A", pk_a, params=params, rng=rng, clock=fabric.clock)
    mgr_b = SessionManager("B", pk_b, params=params, rng=rng, clock=fabric.clock)
    expected_b = pk_b if scenario.mode == "embedded" else None
    party_a = SimParty("A", mgr_a, peer="B", secret=scenario.secret_a,
                       mode=scenario.mode, expected_peer_pk=expected_b)
    party_b = SimParty("B", mgr_b, peer="A", secret=scenario.secret_b,
                       mode=scenario.mode)
    return params, rng, party_a, party_b


def run_scenario(scenario: Scenario) -> Trace:
    """Execute a scripted scenario; deterministic for a fixed seed."""
    policy = FabricPolicy(rules=list(scenario.rules))
    fabric = Fabric(policy, seed=scenario.seed)
    params, rng, party_a, party_b = _build_parties(scenario, fabric)

    adversary = None
    if scenario.adversary in ("mitm", "guess_abort"):
        adversary = MitmSubstitution(
            params, scenario.guess, rng.randbytes(32), rng,
            withhold_tag=scenario.adversary == "guess_abort",
            engage_responder=scenario.adversary == "mitm",
        )
        adversary.name_b = "B"
        # all traffic is routed through the adversary
        party_a.peer = "M"
        party_b.peer = "M"
        fabric.add("M", adversary)
        if scenario.guess is not None:
            policy.guesses_tried.append(scenario.guess)
    fabric.add("A", party_a)
    fabric.add("B", party_b)

    record, first = party_a.manager.start_session(
        "B", party_a.secret, party_a.mode, party_a.expected_peer_pk
    )
    fabric.send("A", party_a.peer, first)
    fabric.run()

    outcomes = {name: node.outcomes() for name, node in fabric.nodes.items()
                if isinstance(node, SimParty)}
    trace = Trace(fabric.lines, outcomes)
    if adversary is not None:
        trace.adversary_tests = adversary.tests_performed
        trace.learned = adversary.learned
    return trace


def mitm_key_substitution(scenario: Scenario) -> Trace:
    """Full bidirectional key substitution with a password guess."""
    scenario.adversary = "mitm"
    if scenario.guess is None:
        raise UsageError("mitm scenario needs a guess")
    return run_scenario(scenario)


def guess_and_abort(scenario: Scenario, guess: str | None = None
                    ) -> tuple[bool, Trace]:
    """One online guess disguised as a network failure.

    The adversary answers the initiator's first flow herself but withholds
    her confirmation tag until she has checked the initiator's tag against
    her guessed keys. On a wrong guess she drops everything: the victim only
    ever observes a timeout and its failure counter stays untouched.
    """
    scenario.adversary = "guess_abort"
    if guess is not None:
        scenario.guess = guess
    if scenario.guess is None:
        raise UsageError("guess_and_abort scenario needs a guess")
    trace = run_scenario(scenario)
    return bool(trace.learned), trace


# ---------------------------------------------------------------------------
# passive offline-dictionary analysis (the honest-but-curious relay)


def offline_dictionary_analysis(params: PublicParams,
                                flows: list[FlowMessage],
                                candidates: list[PasswordScalar]) -> list[int]:
    """Count, per candidate password, the coin assignments consistent with
    the observed blinded elements.

    Only the first-round flows enter the analysis: checking a confirmation
    tag against a candidate requires the discrete log of a blinded element,
    which is exactly what a real-size group denies (in the toy group the
    whole point is that this count ties across all candidates anyway).

    Enumeration is over the full coin space, so this is restricted to the
    tiny test group.
    """
    spec = params.spec
    if spec.order > 4096:
        raise UsageError("offline analysis enumerates coins; tiny groups only")
    counts = []
    for cand in candidates:
        total = 1
        for flow in flows:
            role = PakeRole.INITIATOR if flow is flows[0] else PakeRole.RESPONDER
            blind = elem_pow(params.blind_point(role), cand.pi)
            matches = sum(
                1 for x in range(spec.order)
                if mul(g_pow(spec, Scalar(x)), blind) == flow.blinded
            )
            total *= matches
        counts.append(total)
    return counts
