"""Seven-node network: sources, relays, the sink, and how each scheme rides a
convergecast strategy.

* ``none``: data packets are routed straight to the sink.
* ``BANZKP``: the source runs one end-to-end session with the sink per packet;
  every protocol message is a routed packet, opaque to relays.
* ``BAN_GZKP``: every holder of a packet authenticates with its chosen next
  hop and hands the packet over inside the final data message. With several
  candidate next hops the first to complete the handshake wins.
"""
from __future__ import annotations

import enum
import itertools
import math
import struct
from collections import deque
from dataclasses import dataclass, field

from ..handshake import (
    BROADCAST,
    DATA_KINDS,
    DEFAULT_TIMEOUT_MS,
    Kind,
    ProtocolMessage,
    Scheme,
    provision,
)
from ..zkp_math import GroupParams, make_rng
from .channel import ConfigError, RadioParams
from .engine import Scheduler
from .mac import Frame, Mac, MacParams, Medium
from .routing import NoRoute, StrategyConfig, StrategyKind, choose_min_attenuation, make_router
from .traces import N_NODES, SINK, SOURCES, LinkTrace, load_posture

ROUTED_HEADER = 8  # uid(4) origin target ttl hops
HOP_HEADER = 4  # packet uid carried next to each hop-by-hop protocol message
PAYLOAD_BYTES = 16
DRAIN_MS = 2000.0
APP_QUEUE = 64


class SimScheme(str, enum.Enum):
    NONE = "none"
    BANZKP = "BANZKP"
    BAN_GZKP = "BAN_GZKP"


@dataclass
class DataItem:
    pid: int
    origin: int
    hops: int = 0
    ttl: int = 0
    payload: bytes = b""

    _FMT = ">IBBB"

    def encode(self) -> bytes:
        return struct.pack(self._FMT, self.pid, self.origin, self.hops, self.ttl) + self.payload

    @classmethod
    def decode(cls, raw: bytes) -> "DataItem":
        n = struct.calcsize(cls._FMT)
        pid, origin, hops, ttl = struct.unpack(cls._FMT, raw[:n])
        return cls(pid, origin, hops, ttl, raw[n:])

    def __len__(self):
        return struct.calcsize(self._FMT) + len(self.payload)


@dataclass
class RoutedPacket:
    uid: int
    origin: int
    target: int
    ttl: int
    content: object  # DataItem or ProtocolMessage
    pid: int | None
    hops: int = 0

    @property
    def size(self) -> int:
        return ROUTED_HEADER + len(self.content)

    def next_copy(self) -> "RoutedPacket":
        return RoutedPacket(self.uid, self.origin, self.target, self.ttl - 1, self.content,
                            self.pid, self.hops + 1)


@dataclass
class RunMetrics:
    scheme: str = ""
    strategy: str = ""
    posture: str = ""
    rate_pps: float = 0.0
    seed: int = 0
    duration_s: float = 0.0
    packets_generated: int = 0
    packets_received_at_sink: int = 0
    sum_end_to_end_delay_ms: float = 0.0
    total_transmissions: int = 0
    dropped: dict = field(default_factory=dict)
    per_source: dict = field(default_factory=dict)
    frames_by_kind: dict = field(default_factory=dict)
    auth_messages: int = 0
    duplicates_at_sink: int = 0
    delivered_hops: int = 0

    @property
    def ratio(self) -> float:
        return self.packets_received_at_sink / self.packets_generated if self.packets_generated else 0.0

    @property
    def avg_delay_ms(self) -> float:
        n = self.packets_received_at_sink
        return self.sum_end_to_end_delay_ms / n if n else 0.0

    @property
    def packets_dropped(self) -> int:
        return sum(self.dropped.values())

    def csv_row(self) -> list:
        return [self.scheme, self.strategy, self.posture, f"{self.rate_pps:g}", self.seed,
                self.packets_generated, self.packets_received_at_sink, f"{self.ratio:.6f}",
                f"{self.avg_delay_ms:.3f}", self.total_transmissions]


class Tracker:
    """Per-packet bookkeeping that feeds RunMetrics."""

    def __init__(self, metrics: RunMetrics):
        self.m = metrics
        self.created: dict[int, float] = {}
        self.origin: dict[int, int] = {}
        self.received: set[int] = set()
        self.last_drop: dict[int, str] = {}
        self.auth_per_packet: dict[int, int] = {}
        self.hops_per_packet: dict[int, int] = {}
        self._pids = itertools.count(1)

    def new_packet(self, origin: int, now: float) -> int:
        pid = next(self._pids)
        self.created[pid] = now
        self.origin[pid] = origin
        self.m.packets_generated += 1
        src = self.m.per_source.setdefault(origin, {"generated": 0, "received": 0, "sum_delay_ms": 0.0})
        src["generated"] += 1
        return pid

    def receive(self, pid: int, now: float, hops: int) -> bool:
        if pid in self.received:
            self.m.duplicates_at_sink += 1
            return False
        self.received.add(pid)
        delay = now - self.created[pid]
        self.m.packets_received_at_sink += 1
        self.m.sum_end_to_end_delay_ms += delay
        self.m.delivered_hops += hops
        self.hops_per_packet[pid] = hops
        src = self.m.per_source[self.origin[pid]]
        src["received"] += 1
        src["sum_delay_ms"] += delay
        return True

    def note_drop(self, pid: int | None, reason: str):
        if pid is not None and pid not in self.received:
            self.last_drop[pid] = reason

    def note_auth_message(self, pid: int | None):
        self.m.auth_messages += 1
        if pid is not None:
            self.auth_per_packet[pid] = self.auth_per_packet.get(pid, 0) + 1

    def on_purge(self, frame: Frame):
        kinds = self.m.frames_by_kind
        kinds["purged"] = kinds.get("purged", 0) + 1

    def on_emit(self, frame: Frame):
        self.m.total_transmissions += 1
        kinds = self.m.frames_by_kind
        kinds[frame.kind] = kinds.get(frame.kind, 0) + 1

    def finalize(self):
        dropped = {}
        for pid in self.created:
            if pid not in self.received:
                reason = self.last_drop.get(pid, "in_flight")
                dropped[reason] = dropped.get(reason, 0) + 1
        self.m.dropped = dict(sorted(dropped.items()))


@dataclass
class _SourceState:
    queue: deque = field(default_factory=deque)
    current: DataItem | None = None
    session: object = None
    timer: object = None


@dataclass
class _HopState:
    queue: deque = field(default_factory=deque)
    current: DataItem | None = None
    peers: tuple = ()
    timer: object = None
    carried: set = field(default_factory=set)


@dataclass
class _Negotiation:
    node: int
    target: int
    cont: object
    own: float
    attempt: int
    pid: int | None
    started: float
    replies: list = field(default_factory=list)


class Network:
    def __init__(
        self,
        scheme: SimScheme | str,
        strategy: StrategyConfig,
        trace: LinkTrace,
        *,
        seed: int = 0,
        radio: RadioParams | None = None,
        mac: MacParams | None = None,
        group: GroupParams | None = None,
        timeout_ms: float = DEFAULT_TIMEOUT_MS,
        sources=SOURCES,
        warm_start: bool = False,
        backoff=None,
    ):
        self.scheme = SimScheme(scheme)
        self.config = strategy
        self.trace = trace
        self.seed = seed
        self.radio = radio or RadioParams()
        self.mac_params = mac or MacParams()
        self.timeout_ms = timeout_ms
        self.sources = tuple(sources)
        if SINK in self.sources:
            raise ConfigError("the sink does not generate data")
        self.sched = Scheduler()
        self.metrics = RunMetrics(scheme=self.scheme.value, strategy=strategy.kind.value,
                                  posture=trace.posture, seed=seed)
        self.tracker = Tracker(self.metrics)
        self.medium = Medium(self.sched, trace, self.radio, self.rng_for("channel"), N_NODES, self.tracker)
        self.macs = [Mac(n, self.sched, self.medium, self.rng_for(f"mac{n}"), self.mac_params,
                         self.tracker, backoff) for n in range(N_NODES)]
        for n in range(N_NODES):
            self.medium.receivers[n] = (lambda frame, n=n: self._receive(n, frame))
        self.router = make_router(strategy, trace, self.radio)
        self.router.attach(self)
        self.auth = None
        if self.scheme != SimScheme.NONE:
            self.auth = provision(range(N_NODES), Scheme(self.scheme.value), group or GroupParams.compact(),
                                  seed=seed, timeout_ms=timeout_ms)
            if warm_start:
                for node in self.auth.values():
                    node.known_peers.update({p: True for p in range(N_NODES) if p != node.id})
        self.auth_handled = [0] * N_NODES
        self.auth_log: list[tuple[float, int, tuple]] = []
        self.sniffers = []
        self._uids = itertools.count(1)
        self._neg_ids = itertools.count(1)
        self._negs: dict[int, _Negotiation] = {}
        self._seen = [set() for _ in range(N_NODES)]
        self._src = [_SourceState() for _ in range(N_NODES)]
        self._hop = [_HopState() for _ in range(N_NODES)]

    def rng_for(self, name: str):
        return make_rng(self.seed, name)

    # ---- running

    def run(self, rate_pps: float, duration_s: float, drain_ms: float = DRAIN_MS) -> RunMetrics:
        if rate_pps < 0 or duration_s < 0:
            raise ConfigError("rate and duration must be non-negative")
        self.metrics.rate_pps = rate_pps
        self.metrics.duration_s = duration_s
        end = duration_s * 1000.0
        if rate_pps > 0:
            self.router.start()
            period = 1000.0 / rate_pps
            rng = self.rng_for("app")
            for s in self.sources:
                self.sched.at(rng.uniform(0, period), self._generate, s, period, end)
        self.sched.run(end + drain_ms)
        self.tracker.finalize()
        return self.metrics

    def _generate(self, node: int, period: float, end: float):
        now = self.sched.now
        if now >= end:
            return
        pid = self.tracker.new_packet(node, now)
        payload = struct.pack(">I", pid) * (PAYLOAD_BYTES // 4)
        item = DataItem(pid, node, 0, self.config.ttl, payload)
        if self.scheme == SimScheme.NONE:
            self._originate(node, SINK, item, pid)
        elif self.scheme == SimScheme.BANZKP:
            st = self._src[node]
            if len(st.queue) >= APP_QUEUE:
                self.tracker.note_drop(pid, "queue_overflow")
            else:
                st.queue.append(item)
                self._zk_next(node)
        else:
            self._gz_enqueue(node, item)
        self.sched.after(period, self._generate, node, period, end)

    # ---- frame plumbing

    def send_control(self, node: int, kind: str, size: int, body, dst: int = BROADCAST, on_done=None):
        self.macs[node].send(Frame(node, dst, kind, size, body, on_done=on_done))

    def _receive(self, node: int, frame: Frame):
        for sniff in self.sniffers:
            sniff(node, frame)
        kind = frame.kind
        if kind == "routed":
            self._on_routed(node, frame.body)
        elif kind == "hop":
            self._on_hop(node, frame)
        elif kind == "req":
            self._on_req(node, frame.body)
        elif kind == "rep":
            self._on_rep(node, frame.body)
        else:
            self.router.on_frame(node, frame)

    def _frame_for(self, node: int, hops, kind: str, size: int, body, pid):
        if self.router.flooding:
            return Frame(node, BROADCAST, kind, size, body, pid)
        hops = tuple(sorted(hops))
        if len(hops) == 1:
            return Frame(node, hops[0], kind, size, body, pid,
                         retries_left=self.config.retransmissions)
        return Frame(node, BROADCAST, kind, size, body, pid, targets=frozenset(hops))

    # ---- next-hop resolution

    def _resolve(self, node: int, target: int, packet, pid, cont, attempt: int = 0):
        if self.router.negotiated:
            self._negotiate(node, target, pid, cont)
            return
        try:
            hops = self.router.next_hops(node, target, packet)
        except NoRoute:
            if getattr(packet, "ttl", 1) <= 0 or attempt >= self.config.route_retry_limit:
                self.tracker.note_drop(pid, "no_route")
                cont(None)
            else:
                self.sched.after(self.config.route_retry_ms, self._resolve, node, target, packet, pid,
                                 cont, attempt + 1)
            return
        cont(hops)

    def _negotiate(self, node, target, pid, cont, attempt: int = 1):
        nid = next(self._neg_ids)
        neg = _Negotiation(node, target, cont, self.router.estimate(node, target), attempt, pid,
                           self.sched.now)
        self._negs[nid] = neg

        def after_req(frame, ok):
            self.sched.after(self.config.req_retry_timeout_ms, self._req_deadline, nid)

        self.send_control(node, "req", 6, (node, target, nid), on_done=after_req)

    def _on_req(self, node, body):
        requester, target, nid = body
        est = self.router.estimate(node, target)
        if math.isfinite(est):
            self.send_control(node, "rep", 8, (node, nid, est), dst=requester)

    def _on_rep(self, node, body):
        replier, nid, est = body
        neg = self._negs.get(nid)
        if neg is None or neg.node != node:
            return
        first_valid = choose_min_attenuation(neg.replies, neg.own, neg.target) is None
        neg.replies.append((replier, est))
        if replier == neg.target:
            self._close_negotiation(nid)
        elif first_valid and choose_min_attenuation(neg.replies, neg.own, neg.target) is not None:
            # collect competing offers for a short window after the first usable one
            self.sched.after(self.config.rep_window_ms, self._close_negotiation, nid)

    def _close_negotiation(self, nid):
        neg = self._negs.pop(nid, None)
        if neg is not None:
            neg.cont({choose_min_attenuation(neg.replies, neg.own, neg.target)})

    def _req_deadline(self, nid):
        neg = self._negs.get(nid)
        if neg is None or choose_min_attenuation(neg.replies, neg.own, neg.target) is not None:
            return
        del self._negs[nid]
        if neg.attempt < self.config.max_req_attempts:
            self._negotiate(neg.node, neg.target, neg.pid, neg.cont, neg.attempt + 1)
        else:
            self.tracker.note_drop(neg.pid, "no_route")
            neg.cont(None)

    # ---- routed (end-to-end) packets

    def _originate(self, node: int, target: int, content, pid, on_sent=None, session=None):
        pkt = RoutedPacket(next(self._uids), node, target, self.config.ttl, content, pid)
        self._seen[node].add(pkt.uid)
        self._forward(node, pkt, on_sent, session)

    def _forward(self, node: int, pkt: RoutedPacket, on_sent=None, session=None):
        if pkt.hops >= self.config.hop_limit:
            self.tracker.note_drop(pkt.pid, "hop_limit")
            return

        def send(hops):
            if not hops:
                if on_sent is not None:
                    on_sent(None, False)
                return
            frame = self._frame_for(node, hops, "routed", pkt.size, pkt, pkt.pid)
            frame.on_done = on_sent
            frame.session = session
            if isinstance(pkt.content, ProtocolMessage) and pkt.origin == node:
                self.tracker.note_auth_message(pkt.pid)
            self.macs[node].send(frame)

        self._resolve(node, pkt.target, pkt, pkt.pid, send)

    def _on_routed(self, node: int, pkt: RoutedPacket):
        if pkt.uid in self._seen[node]:
            return
        self._seen[node].add(pkt.uid)
        if node == pkt.target:
            if isinstance(pkt.content, DataItem):
                self.tracker.receive(pkt.pid, self.sched.now, pkt.hops + 1)
            else:
                self._zk_consume(node, pkt)
            return
        if self.router.flooding and pkt.ttl <= 1:
            self.tracker.note_drop(pkt.pid, "ttl_expired")
            return
        self._forward(node, pkt.next_copy())

    # ---- BANZKP: one end-to-end session per packet

    def _zk_next(self, node: int):
        st = self._src[node]
        if st.current is not None or not st.queue:
            return
        item = st.queue.popleft()
        st.current = item
        msg = self.auth[node].start(SINK, item.encode(), self.sched.now)
        st.session = self.auth[node].outgoing[SINK]
        self._originate(node, SINK, msg, item.pid, on_sent=self._arm(st, self._zk_timeout, node, item),
                        session=st.session)

    def _zk_finish(self, node: int, reason: str | None):
        st = self._src[node]
        if reason is not None:
            self.tracker.note_drop(st.current.pid, reason)
        self.sched.cancel(st.timer)
        st.current = st.session = st.timer = None
        self._zk_next(node)

    def _zk_timeout(self, node: int, item: DataItem):
        st = self._src[node]
        if st.current is item:
            self.auth[node].expire(self.sched.now)
            self.auth[node].abandon(SINK, "timeout")
            self._zk_finish(node, "auth_timeout")

    def _zk_consume(self, node: int, pkt: RoutedPacket):
        msg = pkt.content
        auth = self.auth[node]
        self.auth_handled[node] += 1
        reaction = auth.handle(msg, self.sched.now)
        peer = msg.sender_id
        for reply in reaction.replies:
            self._originate(node, peer, reply, pkt.pid, session=reaction.session)
        if node == SINK:
            if reaction.delivered is not None:
                item = DataItem.decode(reaction.delivered)
                self.tracker.receive(item.pid, self.sched.now, pkt.hops + 1)
            return
        st = self._src[node]
        if st.current is None or reaction.session is not st.session:
            return
        if any(r.kind in DATA_KINDS for r in reaction.replies):
            self._zk_finish(node, None)
        elif reaction.failed is not None and st.session.closed:
            self._zk_finish(node, "auth_failed")

    # ---- BAN-GZKP: per-hop sessions, packet rides inside the data message

    def _gz_enqueue(self, node: int, item: DataItem):
        st = self._hop[node]
        if len(st.queue) >= APP_QUEUE:
            self.tracker.note_drop(item.pid, "queue_overflow")
            return
        st.queue.append(item)
        self._gz_next(node)

    def _gz_next(self, node: int):
        st = self._hop[node]
        while st.current is None and st.queue:
            item = st.queue.popleft()
            if item.hops >= self.config.hop_limit:
                self.tracker.note_drop(item.pid, "hop_limit")
                continue
            st.current = item
            st.carried.add(item.pid)
            self._resolve(node, SINK, item, item.pid, lambda hops, item=item: self._gz_auth(node, item, hops))

    def _gz_release(self, node: int):
        st = self._hop[node]
        self.sched.cancel(st.timer)
        st.current, st.peers, st.timer = None, (), None
        self._gz_next(node)

    def _gz_auth(self, node: int, item: DataItem, hops):
        st = self._hop[node]
        if st.current is not item:
            return
        if not hops:
            self._gz_release(node)
            return
        auth = self.auth[node]
        data = item.encode()
        now = self.sched.now
        if self.router.flooding or len(hops) > 1:
            msg = auth.start(BROADCAST, data, now)
            st.peers = tuple(sorted(hops))
        else:
            (peer,) = tuple(hops)
            msg = auth.start(peer, data, now)
            st.peers = (peer,)
        self.auth_log.append((now, node, st.peers))
        session = auth.outgoing[BROADCAST if len(st.peers) > 1 or self.router.flooding else st.peers[0]]
        self._send_hop(node, hops, msg, item.pid, on_sent=self._arm(st, self._gz_timeout, node, item),
                       session=session)

    def _arm(self, st, expire, node: int, item: DataItem):
        """Session clock starts when the opening message leaves the radio."""

        def on_sent(frame, ok):
            if st.timer is None and st.current is item:
                st.timer = self.sched.after(self.timeout_ms, expire, node, item)

        return on_sent

    def _send_hop(self, node: int, hops, msg: ProtocolMessage, pid, reply: bool = False, on_sent=None,
                  session=None):
        size = len(msg) + HOP_HEADER
        if reply:
            (peer,) = tuple(hops)
            frame = Frame(node, peer, "hop", size, (msg, pid), pid, retries_left=self.config.retransmissions)
        else:
            frame = self._frame_for(node, hops, "hop", size, (msg, pid), pid)
        frame.on_done = on_sent
        frame.session = session
        self.tracker.note_auth_message(pid)
        self.macs[node].send(frame)

    def _gz_timeout(self, node: int, item: DataItem):
        st = self._hop[node]
        if st.current is not item:
            return
        auth = self.auth[node]
        auth.abandon(BROADCAST, "timeout")
        for peer in st.peers:
            auth.abandon(peer, "timeout")
        self.tracker.note_drop(item.pid, "auth_timeout")
        self._gz_release(node)

    def _on_hop(self, node: int, frame: Frame):
        msg, pid = frame.body
        st = self._hop[node]
        if msg.kind == Kind.AUTH1 and node != SINK and pid in st.carried:
            return  # already carried this packet: do not offer to take it back
        auth = self.auth[node]
        self.auth_handled[node] += 1
        reaction = auth.handle(msg, self.sched.now)
        for reply in reaction.replies:
            self._send_hop(node, (msg.sender_id,), reply, pid, reply=True, session=reaction.session)
            if reply.kind in DATA_KINDS and st.current is not None and st.current.pid == pid:
                # first finisher takes the packet; drop the other candidates
                auth.abandon(BROADCAST, "another neighbour finished first")
                for peer in st.peers:
                    if peer != msg.sender_id:
                        auth.abandon(peer, "another neighbour finished first")
                self._gz_release(node)
        if reaction.delivered is not None:
            item = DataItem.decode(reaction.delivered)
            item.hops += 1
            if node == SINK:
                self.tracker.receive(item.pid, self.sched.now, item.hops)
            elif self.router.flooding and item.ttl <= 1:
                self.tracker.note_drop(item.pid, "ttl_expired")
            else:
                if self.router.flooding:
                    item.ttl -= 1
                self._gz_enqueue(node, item)


def plug_scheme(scheme, strategy, topology: LinkTrace, **options) -> Network:
    """Wire a scheme onto a strategy over a channel trace, ready to run."""
    if not isinstance(strategy, StrategyConfig):
        strategy = StrategyConfig(StrategyKind(strategy))
    return Network(scheme, strategy, topology, **options)


def run_simulation(scheme, strategy, posture, packet_rate: float, duration: float, seed: int = 0,
                   *, trace: LinkTrace | None = None, trace_dir=None, drain_ms: float = DRAIN_MS,
                   **options) -> RunMetrics:
    """Simulate ``duration`` seconds with every source generating ``packet_rate`` packets/s."""
    if trace is None:
        trace = load_posture(posture, trace_dir)
    net = plug_scheme(scheme, strategy, trace, seed=seed, **options)
    metrics = net.run(packet_rate, duration, drain_ms)
    metrics.posture = getattr(posture, "value", posture) or trace.posture
    return metrics
