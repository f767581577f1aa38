"""BANZKP and BAN-GZKP authentication state machines and their wire codec.

Wire layout of every message::

    tag (1) | sender id (1) | receiver id (1) | field* where field = len (2, BE) | bytes

Encrypted fields hold a fixed-layout plaintext: ids are one byte, group
elements ``params.element_bytes`` bytes MSB-first, pointers two bytes,
intervals ``params.interval_bytes`` bytes. Variable-length application data
carries its own two-byte length inside the ciphertext.
"""
from __future__ import annotations

import enum
import random
import struct
from dataclasses import dataclass, field

from .zkp_math import (
    GroupElement,
    GroupParams,
    IntervalPointer,
    Nonce,
    SymmetricKey,
    bits_to_bytes,
    derive_data_key,
    element_from_bytes,
    element_to_bytes,
    extract_interval,
    make_rng,
    pow_secret,
    random_element,
    random_key,
    random_nonce,
    random_pointer,
    stream_encrypt,
)

BROADCAST = 255
DEFAULT_TIMEOUT_MS = 500.0


class Scheme(str, enum.Enum):
    BANZKP = "BANZKP"
    BAN_GZKP = "BAN_GZKP"


class Kind(enum.IntEnum):
    AUTH1 = 1
    AUTH2 = 2
    AUTH3 = 3
    AUTH4 = 4
    AUTH5_DATA = 5
    AUTH2_OPT = 6
    AUTH3_OPT_DATA = 7


DATA_KINDS = (Kind.AUTH5_DATA, Kind.AUTH3_OPT_DATA)


class Role(str, enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class CheckingFailed(Exception):
    """A received message did not decode, decrypt or verify."""


class MalformedMessage(CheckingFailed):
    pass


@dataclass(frozen=True)
class ProtocolMessage:
    kind: Kind
    sender_id: int
    receiver_id: int
    fields: tuple[bytes, ...]

    @property
    def payload(self) -> bytes:
        return b"".join(struct.pack(">H", len(f)) + f for f in self.fields)

    def encode(self) -> bytes:
        return bytes((int(self.kind), self.sender_id, self.receiver_id)) + self.payload

    def __len__(self):
        return 3 + sum(2 + len(f) for f in self.fields)

    @classmethod
    def decode(cls, raw: bytes) -> "ProtocolMessage":
        if len(raw) < 3:
            raise MalformedMessage("truncated header")
        try:
            kind = Kind(raw[0])
        except ValueError:
            raise MalformedMessage(f"unknown tag {raw[0]}") from None
        fields = []
        pos = 3
        while pos < len(raw):
            if pos + 2 > len(raw):
                raise MalformedMessage("truncated field length")
            (n,) = struct.unpack_from(">H", raw, pos)
            pos += 2
            if pos + n > len(raw):
                raise MalformedMessage("truncated field body")
            fields.append(bytes(raw[pos:pos + n]))
            pos += n
        return cls(kind, raw[1], raw[2], tuple(fields))


@dataclass(frozen=True)
class NodeIdentity:
    """Pre-provisioned material. ``pair_keys`` overrides the network-wide
    initial key for specific peers when keys are provisioned pairwise."""

    id: int
    initial_key: SymmetricKey
    shared_secret: GroupElement
    pair_keys: tuple[tuple[int, SymmetricKey], ...] = ()

    def __post_init__(self):
        if not 0 <= self.id <= 254:
            raise ValueError(f"node id {self.id} outside 0..254")

    def key_for(self, peer_id: int) -> SymmetricKey:
        for pid, key in self.pair_keys:
            if pid == peer_id:
                return key
        return self.initial_key


@dataclass
class Counters:
    multiplications: int = 0
    enc_dec_ops: int = 0
    messages_sent: int = 0

    def __add__(self, other: "Counters") -> "Counters":
        return Counters(
            self.multiplications + other.multiplications,
            self.enc_dec_ops + other.enc_dec_ops,
            self.messages_sent + other.messages_sent,
        )


@dataclass
class SessionState:
    role: Role
    scheme: Scheme
    peer_id: int
    phase: int = 0
    my_nonce: Nonce | None = None
    my_public: GroupElement | None = None
    peer_public: GroupElement | None = None
    session_secret: GroupElement | None = None
    ri: IntervalPointer | None = None
    r: IntervalPointer | None = None
    interval: bytes | None = None
    k_cs: SymmetricKey | None = None
    k_r: SymmetricKey | None = None
    pending_commitment: bytes | None = None
    fast_path: bool = False
    data: bytes | None = None
    started_at: float = 0.0
    timeout_deadline: float = float("inf")
    closed: bool = False
    completed: bool = False
    close_reason: str = ""
    counters: Counters = field(default_factory=Counters)

    @property
    def live(self) -> bool:
        return not (self.closed or self.completed)

    def advance(self, phase: int):
        if phase <= self.phase:
            raise CheckingFailed(f"phase {phase} after phase {self.phase}")
        self.phase = phase

    def close(self, reason: str):
        self.closed = True
        self.close_reason = reason


# --- field helpers -------------------------------------------------------


def _enc(session: SessionState, key: SymmetricKey, plaintext: bytes) -> bytes:
    session.counters.enc_dec_ops += 1
    return stream_encrypt(key, plaintext)


def _split(plain: bytes, sizes: list[int]) -> list[bytes]:
    if len(plain) != sum(sizes):
        raise CheckingFailed(f"plaintext length {len(plain)} != {sum(sizes)}")
    out, pos = [], 0
    for n in sizes:
        out.append(plain[pos:pos + n])
        pos += n
    return out


def _expect_kind(msg: ProtocolMessage, kind: Kind, nfields: int):
    if msg.kind != kind:
        raise CheckingFailed(f"expected {kind.name}, got {msg.kind.name}")
    if len(msg.fields) != nfields:
        raise CheckingFailed(f"{kind.name} needs {nfields} fields, got {len(msg.fields)}")


def _check_id(raw: bytes, expected: int):
    if raw != bytes((expected,)):
        raise CheckingFailed(f"embedded id {raw.hex()} != {expected}")


def _pointer_bytes(p: IntervalPointer) -> bytes:
    return struct.pack(">H", p.start_bit)


def _read_pointer(raw: bytes, params: GroupParams) -> IntervalPointer:
    value = struct.unpack(">H", raw)[0]
    if value >= params.min_secret_bits:
        raise CheckingFailed(f"pointer {value} out of range")
    return IntervalPointer(value)


def _data_plain(node_id: int, data: bytes) -> bytes:
    return bytes((node_id,)) + struct.pack(">H", len(data)) + data


def _read_data_plain(plain: bytes, expected_id: int) -> bytes:
    if len(plain) < 3:
        raise CheckingFailed("data message too short")
    _check_id(plain[:1], expected_id)
    (n,) = struct.unpack(">H", plain[1:3])
    if n != len(plain) - 3:
        raise CheckingFailed("data length field does not match")
    return plain[3:]


def _interval_bytes(secret: GroupElement, ri: IntervalPointer, params: GroupParams) -> bytes:
    return bits_to_bytes(extract_interval(secret, ri, params.interval_bits, params))


def _read_element(raw: bytes, params: GroupParams) -> GroupElement:
    el = element_from_bytes(raw, params)
    if not 2 <= el.value < params.modulus:
        raise CheckingFailed("group element out of range")
    return el


# --- the node ------------------------------------------------------------


@dataclass
class Reaction:
    """What a node did in response to one incoming message."""

    replies: list[ProtocolMessage] = field(default_factory=list)
    delivered: bytes | None = None
    session: SessionState | None = None
    failed: str | None = None

    @property
    def accepted(self) -> bool:
        return self.delivered is not None


class AuthNode:
    """One participant: identity, peer-recognition table and session tables."""

    def __init__(
        self,
        identity: NodeIdentity,
        scheme: Scheme,
        params: GroupParams,
        rng: random.Random,
        peers=None,
        timeout_ms: float = DEFAULT_TIMEOUT_MS,
    ):
        self.identity = identity
        self.scheme = Scheme(scheme)
        self.params = params
        self.rng = rng
        self.peers = None if peers is None else frozenset(peers)
        self.timeout_ms = timeout_ms
        self.known_peers: dict[int, bool] = {}
        self.outgoing: dict[int, SessionState] = {}
        self.incoming: dict[int, SessionState] = {}
        self.history: list[SessionState] = []

    @property
    def id(self) -> int:
        return self.identity.id

    def accepts_peer(self, peer_id: int) -> bool:
        return peer_id != self.id and (self.peers is None or peer_id in self.peers)

    # ----- initiator entry point

    def start(self, peer_id: int, data: bytes, now: float = 0.0) -> ProtocolMessage:
        old = self.outgoing.get(peer_id)
        if old is not None and old.live:
            old.close("superseded")
        session = SessionState(Role.INITIATOR, self.scheme, peer_id, data=data, started_at=now,
                               timeout_deadline=now + self.timeout_ms)
        self.outgoing[peer_id] = session
        self.history.append(session)
        return initiate(session, self, peer_id)

    def abandon(self, peer_id: int, reason: str = "abandoned"):
        session = self.outgoing.get(peer_id)
        if session is not None and session.live:
            session.close(reason)

    # ----- message dispatch

    def handle(self, msg: ProtocolMessage, now: float = 0.0) -> Reaction:
        if msg.receiver_id not in (self.id, BROADCAST):
            return Reaction(failed="not addressed to this node")
        try:
            if msg.kind == Kind.AUTH1:
                return self._on_auth1(msg, now)
            if msg.kind in (Kind.AUTH2, Kind.AUTH2_OPT, Kind.AUTH4):
                return self._on_initiator_msg(msg, now)
            if msg.kind == Kind.AUTH3:
                session = self._responder_session(msg.sender_id)
                reply = verify_and_commit(session, self, msg)
                return Reaction([reply], session=session)
            if msg.kind in DATA_KINDS:
                session = self._responder_session(msg.sender_id)
                data = receive_data(session, self, msg)
                return Reaction(delivered=data, session=session)
        except CheckingFailed as exc:
            return Reaction(failed=str(exc), session=getattr(exc, "session", None))
        return Reaction(failed=f"unhandled kind {msg.kind}")

    def _responder_session(self, peer_id: int) -> SessionState:
        session = self.incoming.get(peer_id)
        if session is None or not session.live:
            raise CheckingFailed(f"no live session with {peer_id}")
        return session

    def _on_auth1(self, msg: ProtocolMessage, now: float) -> Reaction:
        peer = msg.sender_id
        if not self.accepts_peer(peer):
            raise CheckingFailed(f"sender {peer} is not a configured peer")
        old = self.incoming.get(peer)
        if old is not None and old.live:
            old.close("replaced by new Auth1")
        session = SessionState(Role.RESPONDER, self.scheme, peer, started_at=now,
                               timeout_deadline=now + self.timeout_ms)
        if self.scheme == Scheme.BAN_GZKP and self.known_peers.get(peer, False):
            reply = respond_opt(session, self, msg)
        else:
            reply = respond_full(session, self, msg)
        self.incoming[peer] = session
        self.history.append(session)
        return Reaction([reply], session=session)

    def _on_initiator_msg(self, msg: ProtocolMessage, now: float) -> Reaction:
        peer = msg.sender_id
        session = self.outgoing.get(peer)
        if msg.kind in (Kind.AUTH2, Kind.AUTH2_OPT) and (session is None or not session.live):
            session = self._fork_broadcast(peer)
        if session is None or not session.live:
            raise CheckingFailed(f"no live session towards {peer}")
        try:
            if msg.kind == Kind.AUTH2:
                reply = challenge_reply(session, self, msg)
            elif msg.kind == Kind.AUTH2_OPT:
                reply = finish_opt_and_send_data(session, self, msg, session.data)
            else:
                reply = confirm_and_send_data(session, self, msg, session.data)
        except CheckingFailed as exc:
            exc.session = session
            raise
        return Reaction([reply], session=session)

    def _fork_broadcast(self, peer: int) -> SessionState | None:
        """Per-responder copy of a live broadcast initiation."""
        template = self.outgoing.get(BROADCAST)
        if template is None or not template.live or template.phase != 1 or not self.accepts_peer(peer):
            return None
        session = SessionState(
            Role.INITIATOR, self.scheme, peer, phase=1, my_nonce=template.my_nonce,
            my_public=template.my_public, data=template.data, started_at=template.started_at,
            timeout_deadline=template.timeout_deadline,
        )
        self.outgoing[peer] = session
        self.history.append(session)
        return session

    # ----- timers

    def expire(self, now: float) -> list[SessionState]:
        closed = []
        for table in (self.outgoing, self.incoming):
            for session in table.values():
                if session.live and now >= session.timeout_deadline:
                    on_timeout(session, now)
                    closed.append(session)
        return closed


# --- protocol steps ------------------------------------------------------


def initiate(session: SessionState, node: AuthNode, peer_id: int) -> ProtocolMessage:
    params = node.params
    session.my_nonce = random_nonce(node.rng, params)
    session.my_public = pow_secret(node.identity.shared_secret, session.my_nonce, params)
    session.counters.multiplications += 1
    plain = bytes((node.id,)) + element_to_bytes(session.my_public, params)
    blob = _enc(session, node.identity.key_for(peer_id), plain)
    session.advance(1)
    session.counters.messages_sent += 1
    return ProtocolMessage(Kind.AUTH1, node.id, peer_id, (blob,))


def _open_auth1(session: SessionState, node: AuthNode, msg: ProtocolMessage) -> GroupElement:
    params = node.params
    _expect_kind(msg, Kind.AUTH1, 1)
    plain = stream_encrypt(node.identity.key_for(msg.sender_id), msg.fields[0])
    raw_id, raw_vp = _split(plain, [1, params.element_bytes])
    _check_id(raw_id, msg.sender_id)
    return _read_element(raw_vp, params)


def _responder_secret(session: SessionState, node: AuthNode, peer_public: GroupElement):
    params = node.params
    session.peer_public = peer_public
    session.my_nonce = random_nonce(node.rng, params)
    session.my_public = pow_secret(node.identity.shared_secret, session.my_nonce, params)
    session.session_secret = pow_secret(peer_public, session.my_nonce, params)
    session.counters.multiplications += 2
    session.ri = random_pointer(node.rng, params)
    session.interval = _interval_bytes(session.session_secret, session.ri, params)


def respond_full(session: SessionState, node: AuthNode, msg: ProtocolMessage) -> ProtocolMessage:
    params = node.params
    peer_public = _open_auth1(session, node, msg)
    _responder_secret(session, node, peer_public)
    session.k_cs = random_key(node.rng, params.data_key_bits)
    plain = bytes((node.id,)) + element_to_bytes(session.my_public, params) + _pointer_bytes(session.ri)
    blob = _enc(session, node.identity.key_for(session.peer_id), plain)
    commitment = _enc(session, session.k_cs, session.interval)
    session.advance(2)
    session.counters.messages_sent += 1
    return ProtocolMessage(Kind.AUTH2, node.id, msg.sender_id, (blob, commitment))


def respond_opt(session: SessionState, node: AuthNode, msg: ProtocolMessage) -> ProtocolMessage:
    params = node.params
    if not node.known_peers.get(msg.sender_id, False):
        raise CheckingFailed(f"peer {msg.sender_id} not recognised for the fast path")
    peer_public = _open_auth1(session, node, msg)
    _responder_secret(session, node, peer_public)
    session.fast_path = True
    session.r = random_pointer(node.rng, params)
    session.k_r = derive_data_key(session.session_secret, session.r, params)
    plain = (
        bytes((node.id,))
        + element_to_bytes(session.my_public, params)
        + _pointer_bytes(session.ri)
        + _pointer_bytes(session.r)
        + session.interval
    )
    blob = _enc(session, node.identity.key_for(session.peer_id), plain)
    session.advance(2)
    session.counters.messages_sent += 1
    return ProtocolMessage(Kind.AUTH2_OPT, node.id, msg.sender_id, (blob,))


def _initiator_secret(session: SessionState, node: AuthNode, peer_public: GroupElement):
    session.peer_public = peer_public
    session.session_secret = pow_secret(peer_public, session.my_nonce, node.params)
    session.counters.multiplications += 1


def challenge_reply(session: SessionState, node: AuthNode, msg: ProtocolMessage) -> ProtocolMessage:
    params = node.params
    if session.phase != 1 or session.role != Role.INITIATOR:
        raise CheckingFailed("Auth2 outside initiator phase 1")
    _expect_kind(msg, Kind.AUTH2, 2)
    plain = stream_encrypt(node.identity.key_for(session.peer_id), msg.fields[0])
    raw_id, raw_vq, raw_ri = _split(plain, [1, params.element_bytes, 2])
    _check_id(raw_id, session.peer_id)
    if len(msg.fields[1]) != params.interval_bytes:
        raise CheckingFailed("commitment has the wrong length")
    session.ri = _read_pointer(raw_ri, params)
    _initiator_secret(session, node, _read_element(raw_vq, params))
    session.interval = _interval_bytes(session.session_secret, session.ri, params)
    session.pending_commitment = msg.fields[1]
    blob = _enc(session, node.identity.key_for(session.peer_id), bytes((node.id,)) + session.interval)
    session.advance(3)
    session.counters.messages_sent += 1
    return ProtocolMessage(Kind.AUTH3, node.id, session.peer_id, (blob,))


def verify_and_commit(session: SessionState, node: AuthNode, msg: ProtocolMessage) -> ProtocolMessage:
    params = node.params
    try:
        if session.phase != 2 or session.fast_path:
            raise CheckingFailed("Auth3 outside responder phase 2")
        _expect_kind(msg, Kind.AUTH3, 1)
        plain = stream_encrypt(node.identity.key_for(session.peer_id), msg.fields[0])
        raw_id, interval = _split(plain, [1, params.interval_bytes])
        _check_id(raw_id, session.peer_id)
        if interval != session.interval:
            raise CheckingFailed("interval mismatch")
    except CheckingFailed as exc:
        session.close(f"checking failed: {exc}")
        raise
    if session.scheme == Scheme.BAN_GZKP:
        session.k_r = derive_data_key(session.session_secret, session.k_cs.as_pointer(params), params)
    session.advance(4)
    session.counters.messages_sent += 1
    return ProtocolMessage(Kind.AUTH4, node.id, session.peer_id, (session.k_cs.to_bytes(),))


def _send_data(session: SessionState, node: AuthNode, kind: Kind, key: SymmetricKey, data: bytes, phase: int):
    blob = _enc(session, key, _data_plain(node.id, data))
    session.advance(phase)
    session.counters.messages_sent += 1
    session.completed = True
    return ProtocolMessage(kind, node.id, session.peer_id, (blob,))


def confirm_and_send_data(session: SessionState, node: AuthNode, msg: ProtocolMessage, data: bytes) -> ProtocolMessage:
    params = node.params
    try:
        if session.phase != 3 or session.pending_commitment is None:
            raise CheckingFailed("Auth4 outside initiator phase 3")
        _expect_kind(msg, Kind.AUTH4, 1)
        if len(msg.fields[0]) * 8 < params.data_key_bits or not msg.fields[0]:
            raise CheckingFailed("commitment key too short")
        k_cs = SymmetricKey.from_bytes(msg.fields[0], params.data_key_bits)
        if stream_encrypt(k_cs, session.pending_commitment) != session.interval:
            raise CheckingFailed("commitment does not open to our interval")
    except CheckingFailed as exc:
        session.close(f"checking failed: {exc}")
        raise
    session.k_cs = k_cs
    if session.scheme == Scheme.BANZKP:
        key = node.identity.key_for(session.peer_id)
    else:
        session.k_r = derive_data_key(session.session_secret, k_cs.as_pointer(params), params)
        key = session.k_r
    return _send_data(session, node, Kind.AUTH5_DATA, key, data, 5)


def finish_opt_and_send_data(session: SessionState, node: AuthNode, msg: ProtocolMessage, data: bytes) -> ProtocolMessage:
    params = node.params
    try:
        if session.phase != 1 or session.scheme != Scheme.BAN_GZKP:
            raise CheckingFailed("Auth2Opt outside BAN-GZKP initiator phase 1")
        _expect_kind(msg, Kind.AUTH2_OPT, 1)
        plain = stream_encrypt(node.identity.key_for(session.peer_id), msg.fields[0])
        raw_id, raw_vq, raw_ri, raw_r, interval = _split(
            plain, [1, params.element_bytes, 2, 2, params.interval_bytes]
        )
        _check_id(raw_id, session.peer_id)
        session.ri = _read_pointer(raw_ri, params)
        session.r = _read_pointer(raw_r, params)
        _initiator_secret(session, node, _read_element(raw_vq, params))
        session.interval = _interval_bytes(session.session_secret, session.ri, params)
        if interval != session.interval:
            raise CheckingFailed("interval mismatch")
    except CheckingFailed as exc:
        session.close(f"checking failed: {exc}")
        raise
    session.fast_path = True
    session.k_r = derive_data_key(session.session_secret, session.r, params)
    return _send_data(session, node, Kind.AUTH3_OPT_DATA, session.k_r, data, 3)


def receive_data(session: SessionState, node: AuthNode, msg: ProtocolMessage) -> bytes:
    try:
        if session.role != Role.RESPONDER:
            raise CheckingFailed("data sent to an initiator")
        if session.fast_path:
            _expect_kind(msg, Kind.AUTH3_OPT_DATA, 1)
            if session.phase != 2:
                raise CheckingFailed("fast-path data outside phase 2")
        else:
            _expect_kind(msg, Kind.AUTH5_DATA, 1)
            if session.phase != 4:
                raise CheckingFailed("data before commitment key was sent")
        key = node.identity.key_for(session.peer_id) if session.scheme == Scheme.BANZKP else session.k_r
        data = _read_data_plain(stream_encrypt(key, msg.fields[0]), session.peer_id)
    except CheckingFailed as exc:
        session.close(f"rejected: {exc}")
        raise
    session.advance(5 if not session.fast_path else 3)
    session.completed = True
    if session.scheme == Scheme.BAN_GZKP:
        node.known_peers[session.peer_id] = True
    return data


def on_timeout(session: SessionState, now: float) -> SessionState:
    if session.live and now >= session.timeout_deadline:
        session.close("timeout")
        session.data = None
    return session


def provision(
    node_ids,
    scheme: Scheme,
    params: GroupParams | None = None,
    seed=0,
    pairwise_keys: bool = False,
    timeout_ms: float = DEFAULT_TIMEOUT_MS,
    key_bits: int = 128,
) -> dict[int, AuthNode]:
    """Manual initialisation: every node gets the same V and the initial key(s).

    With ``pairwise_keys`` each unordered pair shares its own K_I instead of
    one network-wide key.
    """
    params = params or GroupParams()
    node_ids = list(node_ids)
    rng = make_rng(seed, "provision")
    secret = random_element(rng, params)
    global_key = random_key(rng, key_bits)
    pair = {}
    if pairwise_keys:
        for i, a in enumerate(node_ids):
            for b in node_ids[i + 1:]:
                pair[frozenset((a, b))] = random_key(rng, key_bits)
    nodes = {}
    for nid in node_ids:
        keys = tuple((other, pair[frozenset((nid, other))]) for other in node_ids if other != nid and pair)
        identity = NodeIdentity(nid, global_key, secret, keys)
        nodes[nid] = AuthNode(identity, scheme, params, make_rng(seed, f"node{nid}"), timeout_ms=timeout_ms)
    return nodes


def run_session(initiator: AuthNode, responder: AuthNode, data: bytes, now: float = 0.0, tap=None):
    """Drive one session over a lossless direct link.

    Returns ``(delivered_data_or_None, wire_messages)``; ``tap`` is called
    with every message put on the wire.
    """
    wire = []
    msg = initiator.start(responder.id, data, now)
    target, other = responder, initiator
    delivered = None
    while msg is not None:
        wire.append(msg)
        if tap is not None:
            tap(msg)
        reaction = target.handle(msg, now)
        if reaction.delivered is not None:
            delivered = reaction.delivered
        msg = reaction.replies[0] if reaction.replies else None
        target, other = other, target
    return delivered, wire
