"""Symbolic attacker and the scripted attack scenarios.

The attacker Z can tap links, inject arbitrary messages under any sender id,
skip its own checks, grow its knowledge set and try decryptions with what it
knows. Each scenario drives honest :class:`~wbanzkp.handshake.AuthNode`
instances exactly as the network would and records a line-oriented transcript.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .handshake import (
    DATA_KINDS,
    AuthNode,
    Kind,
    NodeIdentity,
    ProtocolMessage,
    Reaction,
    Scheme,
    provision,
)
from .zkp_math import (
    GroupParams,
    SymmetricKey,
    bits_to_bytes,
    element_to_bytes,
    make_rng,
    random_element,
    random_key,
    render_bits,
    stream_encrypt,
    xor_bytes,
)

ADVERSARY_ID = 200
GUESS_BUDGET = 1 << 16


class Verdict(str, enum.Enum):
    SUCCEEDED = "AttackSucceeded"
    BLOCKED = "AttackBlocked"


class ScenarioName(str, enum.Enum):
    FORGE_NODE = "ForgeNode"
    AUTH_REPLAY_PART1 = "AuthReplayPart1"
    AUTH_REPLAY_PART2 = "AuthReplayPart2"
    MAN_IN_MIDDLE_GUESS = "ManInMiddleGuess"
    DATA_REPLAY = "DataReplay"
    REDUNDANCY_CRACK = "RedundancyCrack"
    SINK_DDOS = "SinkDDoS"


class ScenarioMisconfigured(ValueError):
    pass


@dataclass
class KnowledgeSet:
    known_ids: set[int] = field(default_factory=set)
    captured_messages: list[tuple[ProtocolMessage, int, float]] = field(default_factory=list)
    known_keys: list[SymmetricKey] = field(default_factory=list)
    derived_bytes: list[bytes] = field(default_factory=list)

    def add_key(self, key: SymmetricKey):
        if key not in self.known_keys:
            self.known_keys.append(key)

    def blob(self) -> bytes:
        """Everything Z holds, as one byte string (for substring oracles)."""
        parts = [m.encode() for m, _, _ in self.captured_messages]
        parts += [k.to_bytes() for k in self.known_keys]
        parts += self.derived_bytes
        return b"\x00".join(parts)

    def contains(self, secret: bytes) -> bool:
        return bool(secret) and secret in self.blob()

    def captured(self, kind: Kind | tuple[Kind, ...]) -> list[ProtocolMessage]:
        kinds = kind if isinstance(kind, tuple) else (kind,)
        return [m for m, _, _ in self.captured_messages if m.kind in kinds]


def xor_redundancy(c1: bytes, c2: bytes) -> bytes:
    """XOR of two ciphertexts, truncated to the shorter one."""
    return xor_bytes(c1, c2)


class Adversary:
    def __init__(self, ident: int = ADVERSARY_ID, seed=0):
        self.id = ident
        self.rng = make_rng(seed, "adversary")
        self.knowledge = KnowledgeSet(known_ids={ident})
        self.clock = 0.0

    def intercept(self, msg: ProtocolMessage, phase: int | None = None, now: float | None = None):
        """Passive capture; the caller decides whether delivery still happens."""
        k = self.knowledge
        k.captured_messages.append((msg, phase if phase is not None else _phase_of(msg), self.clock if now is None else now))
        k.known_ids.update((msg.sender_id, msg.receiver_id))
        if msg.kind == Kind.AUTH4 and msg.fields and msg.fields[0]:
            k.add_key(SymmetricKey.from_bytes(msg.fields[0]))

    def inject(self, victim: AuthNode, as_sender: int, to: int, kind: Kind, fields, now: float = 0.0) -> Reaction:
        msg = ProtocolMessage(Kind(kind), as_sender, to, tuple(fields))
        return victim.handle(msg, now)

    def random_bytes(self, n: int) -> bytes:
        return self.rng.getrandbits(8 * n).to_bytes(n, "big") if n else b""

    def redundancy(self, c1: bytes, c2: bytes) -> bytes:
        out = xor_redundancy(c1, c2)
        self.knowledge.derived_bytes.append(out)
        return out


def _phase_of(msg: ProtocolMessage) -> int:
    return {Kind.AUTH2_OPT: 2, Kind.AUTH3_OPT_DATA: 3}.get(msg.kind, int(msg.kind))


@dataclass
class Topology:
    """Role assignment for a scenario; ids are honest node ids."""

    initiator: int = 0
    responder: int = 1
    relay: int | None = 3
    adversary: int = ADVERSARY_ID

    @property
    def honest(self) -> list[int]:
        ids = [self.initiator, self.responder]
        if self.relay is not None:
            ids.append(self.relay)
        return ids


@dataclass
class ScenarioResult:
    name: ScenarioName
    scheme: Scheme
    seed: int
    verdict: Verdict
    transcript: list[str]
    knowledge: KnowledgeSet
    stats: dict = field(default_factory=dict)

    def transcript_text(self) -> str:
        return "\n".join(self.transcript) + "\n"


class _Run:
    """Shared plumbing: a direct A<->B link tapped by Z."""

    def __init__(self, name, scheme, seed, topology, params):
        self.name = ScenarioName(name)
        self.scheme = Scheme(scheme)
        self.seed = seed
        self.topo = topology
        self.params = params
        self.nodes = provision(topology.honest, self.scheme, params, seed=seed)
        self.z = Adversary(topology.adversary, seed)
        self.lines: list[str] = [f"# scenario {self.name.value} scheme {self.scheme.value} seed {seed}"]
        self.now = 0.0
        self.session_no = 0
        self.plaintexts: dict[bytes, bytes] = {}

    @property
    def a(self) -> AuthNode:
        return self.nodes[self.topo.initiator]

    @property
    def b(self) -> AuthNode:
        return self.nodes[self.topo.responder]

    def log(self, text: str):
        self.lines.append(f"{len(self.lines):03d} t={self.now:.0f} {text}")

    def tick(self):
        self.now += 1.0
        self.z.clock = self.now

    def describe(self, msg: ProtocolMessage) -> str:
        return f"{msg.kind.name} {msg.sender_id}->{msg.receiver_id} len={len(msg)} digest={msg.encode()[-4:].hex()}"

    def deliver(self, msg: ProtocolMessage, tapped: bool = True, label: str = "") -> Reaction:
        self.tick()
        if tapped:
            self.z.intercept(msg, now=self.now)
            self.log(f"Z intercepts {self.describe(msg)}")
        node = self.nodes[msg.receiver_id]
        reaction = node.handle(msg, self.now)
        self.react(node, reaction, label)
        return reaction

    def react(self, node: AuthNode, reaction: Reaction, label: str = ""):
        who = f"node {node.id}{' ' + label if label else ''}"
        if reaction.failed:
            self.log(f"{who} checking failed ({reaction.failed}); message dropped")
        elif reaction.delivered is not None:
            self.log(f"{who} accepted data digest={reaction.delivered[-4:].hex()}")
        for reply in reaction.replies:
            self.log(f"{who} checking succeeded; sends {reply.kind.name}")

    def fresh_data(self) -> bytes:
        self.session_no += 1
        return f"vital-sign #{self.session_no:04d} ".encode() + make_rng(self.seed, f"data{self.session_no}").randbytes(16)

    def honest_session(self, tapped: bool = True, hook=None) -> bytes | None:
        """Run one A->B session; ``hook(msg)`` may return an injection to make first."""
        data = self.fresh_data()
        self.log(f"A={self.a.id} starts session with B={self.b.id}")
        msg = self.a.start(self.b.id, data, self.now)
        delivered = None
        while msg is not None:
            if msg.kind in DATA_KINDS:
                self.plaintexts[msg.fields[0]] = bytes((msg.sender_id,)) + len(data).to_bytes(2, "big") + data
            reaction = self.deliver(msg, tapped)
            if reaction.delivered is not None:
                delivered = reaction.delivered
            msg = reaction.replies[0] if reaction.replies else None
            if msg is not None and hook is not None:
                if hook(msg) is False:
                    break
        return delivered

    def result(self, verdict: Verdict, **stats) -> ScenarioResult:
        self.lines.append(f"verdict {verdict.value}")
        return ScenarioResult(self.name, self.scheme, self.seed, verdict, self.lines, self.z.knowledge, stats)

    def warm_up(self, sessions: int):
        for _ in range(sessions):
            self.honest_session()


# --- scenarios ------------------------------------------------------------


def _forge_node(run: _Run) -> ScenarioResult:
    run.warm_up(2)
    params = run.params
    forged_secret = random_element(run.z.rng, params)
    forged_key = random_key(run.z.rng, len(run.a.identity.initial_key))
    succeeded = False
    for claimed in (run.z.id, run.a.id):
        run.b.peers = None  # B accepts any id; only the key can stop Z
        forger = AuthNode(NodeIdentity(claimed, forged_key, forged_secret), run.scheme, params, run.z.rng)
        run.log(f"Z forges Auth1 claiming id {claimed} with its own K_I and V")
        msg = forger.start(run.b.id, b"forged data", run.now)
        for _ in range(4):
            reaction = run.deliver(msg, tapped=False, label="(victim)")
            if reaction.delivered is not None:
                succeeded = True
                break
            if not reaction.replies:
                break
            reply = reaction.replies[0]
            if reply.kind == Kind.AUTH4:
                run.log("B confirmed the forger (sent K_CS)")
                succeeded = True
                break
            run.z.intercept(reply, now=run.now)
            own = forger.handle(reply, run.now)
            if own.replies:
                msg = own.replies[0]
            else:
                run.log("Z skips its own check and fabricates the next message")
                msg = _fabricate_next(run, reply, claimed)
    return run.result(Verdict.SUCCEEDED if succeeded else Verdict.BLOCKED)


def _fabricate_next(run: _Run, reply: ProtocolMessage, claimed: int) -> ProtocolMessage:
    p = run.params
    if reply.kind == Kind.AUTH2:
        return ProtocolMessage(Kind.AUTH3, claimed, reply.sender_id, (run.z.random_bytes(1 + p.interval_bytes),))
    body = run.z.random_bytes(3 + 16)
    return ProtocolMessage(Kind.AUTH3_OPT_DATA if reply.kind == Kind.AUTH2_OPT else Kind.AUTH5_DATA,
                           claimed, reply.sender_id, (body,))


def _auth_replay_part1(run: _Run) -> ScenarioResult:
    run.warm_up(2)
    old_auth1 = run.z.knowledge.captured(Kind.AUTH1)[-1]
    old_auth3 = run.z.knowledge.captured(Kind.AUTH3)
    run.log(f"Z replays captured {run.describe(old_auth1)}")
    reaction = run.deliver(old_auth1, tapped=False, label="(victim)")
    succeeded = False
    if reaction.replies:
        reply = reaction.replies[0]
        run.z.intercept(reply, now=run.now)
        run.log(f"Z intercepts {run.describe(reply)} and confirms checking succeeded")
        if reply.kind == Kind.AUTH2_OPT:
            k_rz = random_key(run.z.rng, run.params.data_key_bits)
            blob = stream_encrypt(k_rz, bytes((run.a.id,)) + (16).to_bytes(2, "big") + run.z.random_bytes(16))
            nxt = ProtocolMessage(Kind.AUTH3_OPT_DATA, run.a.id, run.b.id, (blob,))
            run.log("Z sends data under its own K_R")
        else:
            if old_auth3:
                nxt = old_auth3[-1]
                run.log("Z replays the captured Auth3")
            else:
                nxt = _fabricate_next(run, reply, run.a.id)
        r2 = run.deliver(nxt, tapped=False, label="(victim)")
        succeeded = r2.delivered is not None or any(m.kind == Kind.AUTH4 for m in r2.replies)
    return run.result(Verdict.SUCCEEDED if succeeded else Verdict.BLOCKED)


def _auth_replay_part2(run: _Run) -> ScenarioResult:
    run.warm_up(2)
    stale = run.z.knowledge.captured((Kind.AUTH2, Kind.AUTH2_OPT))[-1]
    stale_kcs = run.z.knowledge.captured(Kind.AUTH4)
    run.log(f"A={run.a.id} starts a new session with B={run.b.id}")
    auth1 = run.a.start(run.b.id, run.fresh_data(), run.now)
    run.tick()
    run.z.intercept(auth1, now=run.now)
    run.log(f"Z intercepts and blocks {run.describe(auth1)}")
    run.log(f"Z replays stale {run.describe(stale)} to A")
    reaction = run.deliver(stale, tapped=False, label="(victim)")
    sent_data = any(m.kind in DATA_KINDS for m in reaction.replies)
    if reaction.replies and not sent_data and stale_kcs:
        run.log("Z replays the stale K_CS")
        r2 = run.deliver(stale_kcs[-1], tapped=False, label="(victim)")
        sent_data = any(m.kind in DATA_KINDS for m in r2.replies)
    return run.result(Verdict.SUCCEEDED if sent_data else Verdict.BLOCKED)


def _man_in_middle_guess(run: _Run) -> ScenarioResult:
    run.warm_up(4)
    k = run.z.knowledge
    secret_repr = [
        element_to_bytes(run.a.identity.shared_secret, run.params),
        bits_to_bytes(render_bits(run.a.identity.shared_secret, run.params)),
    ]
    k_i = run.a.identity.initial_key.to_bytes()
    leaked = any(k.contains(s) for s in secret_repr) or k.contains(k_i)
    run.log(f"Z knowledge: {len(k.captured_messages)} messages, {len(k.known_keys)} keys; secret substrings present: {leaked}")
    blob = k.blob()
    candidates = list(k.known_keys)
    klen = run.params.data_key_bits // 8
    for off in range(0, max(0, len(blob) - klen + 1)):
        if len(candidates) >= GUESS_BUDGET:
            break
        candidates.append(SymmetricKey.from_bytes(blob[off:off + klen]))
    while len(candidates) < GUESS_BUDGET:
        candidates.append(random_key(run.z.rng, run.params.data_key_bits))
    data_msgs = k.captured(DATA_KINDS)
    targets = [(m.fields[0], run.plaintexts[m.fields[0]]) for m in data_msgs if m.fields[0] in run.plaintexts]
    tried = {c.to_bytes(): c for c in candidates}
    cracked = 0
    for cipher, plain in targets:
        # the only key that could decrypt this message starts with c xor m
        needed = xor_bytes(cipher[:klen], plain[:klen])
        key = tried.get(needed)
        if key is not None and stream_encrypt(key, cipher) == plain:
            cracked += 1
    width = run.params.element_bytes
    v_hits = sum(1 for off in range(0, min(len(blob) - width + 1, GUESS_BUDGET)) if blob[off:off + width] == secret_repr[0])
    run.log(f"Z tried {len(candidates)} candidate keys on {len(targets)} data messages: {cracked} decryptions")
    run.log(f"Z tried {min(max(0, len(blob) - width + 1), GUESS_BUDGET)} candidate values of V: {v_hits} matches")
    ok = leaked or cracked or v_hits
    return run.result(Verdict.SUCCEEDED if ok else Verdict.BLOCKED, candidates=len(candidates))


def _data_replay(run: _Run) -> ScenarioResult:
    run.warm_up(2)
    old = run.z.knowledge.captured(DATA_KINDS)[-1]
    replay_outcome = {}

    def hook(msg: ProtocolMessage):
        awaiting = msg.kind == Kind.AUTH4 or msg.kind == Kind.AUTH2_OPT
        if awaiting and "done" not in replay_outcome:
            replay_outcome["done"] = True
            run.log(f"Z sees {msg.kind.name}: B now awaits data; Z injects the captured data message first")
            reaction = run.deliver(old, tapped=False, label="(victim)")
            replay_outcome["accepted"] = reaction.delivered
        return True

    run.honest_session(hook=hook)
    stale = replay_outcome.get("accepted")
    succeeded = stale is not None
    if succeeded:
        run.log("B accepted the expired data as fresh")
    return run.result(Verdict.SUCCEEDED if succeeded else Verdict.BLOCKED)


def _redundancy_crack(run: _Run, sessions: int = 5) -> ScenarioResult:
    run.warm_up(sessions)
    data_msgs = run.z.knowledge.captured(DATA_KINDS)
    pairs = equal = 0
    for m1, m2 in zip(data_msgs, data_msgs[1:]):
        c1, c2 = m1.fields[0], m2.fields[0]
        leak = run.z.redundancy(c1, c2)
        truth = xor_bytes(run.plaintexts[c1], run.plaintexts[c2])
        pairs += 1
        equal += leak == truth
    run.log(f"Z xors {pairs} ciphertext pairs: {equal} equal the plaintext xor")
    return run.result(Verdict.SUCCEEDED if equal else Verdict.BLOCKED, pairs=pairs, equal=equal)


def _sink_ddos(run: _Run, injections: int = 1000) -> ScenarioResult:
    """Z floods a relay with invalid Auth1 requests."""
    topo = run.topo
    relay = run.nodes[topo.relay]
    sink_id = topo.responder
    arrived = 0
    size = 1 + run.params.element_bytes
    for i in range(injections):
        claimed = (run.z.id, topo.initiator)[i % 2]
        run.tick()
        if run.scheme == Scheme.BANZKP:
            # end-to-end: the relay cannot check and forwards towards the sink
            msg = ProtocolMessage(Kind.AUTH1, claimed, sink_id, (run.z.random_bytes(size),))
            arrived += 1
            run.nodes[sink_id].handle(msg, run.now)
        else:
            msg = ProtocolMessage(Kind.AUTH1, claimed, relay.id, (run.z.random_bytes(size),))
            reaction = relay.handle(msg, run.now)
            # hop-by-hop: relays never forward authentication traffic
            if reaction.replies:
                relay.incoming.pop(claimed, None)
    run.log(f"Z injected {injections} invalid Auth1 at relay {relay.id}; {arrived} reached sink {sink_id}")
    return run.result(Verdict.SUCCEEDED if arrived else Verdict.BLOCKED, injected=injections, reached_sink=arrived)


_SCENARIOS = {
    ScenarioName.FORGE_NODE: _forge_node,
    ScenarioName.AUTH_REPLAY_PART1: _auth_replay_part1,
    ScenarioName.AUTH_REPLAY_PART2: _auth_replay_part2,
    ScenarioName.MAN_IN_MIDDLE_GUESS: _man_in_middle_guess,
    ScenarioName.DATA_REPLAY: _data_replay,
    ScenarioName.REDUNDANCY_CRACK: _redundancy_crack,
    ScenarioName.SINK_DDOS: _sink_ddos,
}


def run_scenario(
    scenario: ScenarioName | str,
    scheme: Scheme | str,
    seed: int = 0,
    topology: Topology | None = None,
    params: GroupParams | None = None,
    **options,
) -> ScenarioResult:
    name = ScenarioName(scenario)
    topology = topology or Topology()
    if name == ScenarioName.SINK_DDOS and topology.relay is None:
        raise ScenarioMisconfigured("SinkDDoS needs a relay between the adversary and the sink")
    if len(set(topology.honest)) != len(topology.honest) or topology.adversary in topology.honest:
        raise ScenarioMisconfigured("roles must be distinct nodes")
    run = _Run(name, scheme, seed, topology, params or GroupParams())
    return _SCENARIOS[name](run, **options)


def run_all(schemes=(Scheme.BANZKP, Scheme.BAN_GZKP), seed: int = 0, params: GroupParams | None = None):
    return [run_scenario(name, scheme, seed, params=params) for scheme in schemes for name in ScenarioName]
