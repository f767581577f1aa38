"""Convergecast strategies: next-hop selection up to the sink and back down."""
from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from statistics import NormalDist

from .channel import ConfigError, RadioParams
from .traces import N_NODES, SINK, LinkTrace


class NoRoute(LookupError):
    pass


class StrategyKind(str, enum.Enum):
    APAP = "APAP"
    CTP = "CTP"
    TREE = "TreeBased"
    FLOOD = "FloodToSink"
    MINIATT = "MiniAtt"


DEFAULT_APAP_PARENTS = {0: (1, 3), 2: (1, 3), 3: (1,), 4: (5, 0), 5: (0, 1), 6: (1, 3)}


def _check_acyclic(parents: dict, sink: int = SINK, max_parents: int | None = None):
    for node, ps in parents.items():
        if node == sink:
            raise ConfigError("the sink has no parents")
        if not ps:
            raise ConfigError(f"node {node} has no parent")
        if max_parents is not None and len(ps) > max_parents:
            raise ConfigError(f"node {node} has {len(ps)} parents, at most {max_parents} allowed")
    state = {}

    def visit(n, stack):
        if n == sink:
            return
        if state.get(n) == "done":
            return
        if n in stack:
            raise ConfigError(f"parent table has a cycle through {n}")
        if n not in parents:
            raise ConfigError(f"node {n} has no route to the sink")
        stack.add(n)
        for p in parents[n]:
            visit(p, stack)
        stack.discard(n)
        state[n] = "done"

    for n in parents:
        visit(n, set())


@dataclass
class StrategyConfig:
    kind: StrategyKind
    parents: dict | None = None  # APAP: node -> up to two parents
    trees: dict = field(default_factory=dict)  # TreeBased: posture -> node -> parent
    beacon_interval_ms: float = 1000.0
    ttl: int = 7
    req_retry_timeout_ms: float = 100.0
    rep_window_ms: float = 5.0
    max_req_attempts: int = 5
    max_retransmissions: int = 3
    route_retry_ms: float = 100.0
    route_retry_limit: int = 10
    hop_limit: int = 15

    def __post_init__(self):
        self.kind = StrategyKind(self.kind)
        if self.kind == StrategyKind.APAP:
            if self.parents is None:
                self.parents = dict(DEFAULT_APAP_PARENTS)
            self.parents = {int(k): tuple(v) for k, v in self.parents.items()}
            _check_acyclic(self.parents, max_parents=2)
        for posture, tree in self.trees.items():
            _check_acyclic({k: (v,) for k, v in tree.items()}, max_parents=1)
        if self.ttl < 1:
            raise ConfigError("ttl must be at least 1")
        if self.beacon_interval_ms <= 0 or self.req_retry_timeout_ms <= 0:
            raise ConfigError("timer intervals must be positive")
        if self.max_retransmissions < 0:
            raise ConfigError("retransmissions cannot be negative")

    @property
    def retransmissions(self) -> int:
        return self.max_retransmissions if self.kind in (StrategyKind.TREE, StrategyKind.MINIATT) else 0


# --- pure helpers ---------------------------------------------------------


def descendants(parents: dict, node: int) -> set[int]:
    """Every node whose parent chain can pass through ``node``."""
    out, frontier = set(), [node]
    while frontier:
        cur = frontier.pop()
        for child, ps in parents.items():
            if cur in ps and child not in out:
                out.add(child)
                frontier.append(child)
    return out


def reverse_hops(parents: dict, node: int, target: int) -> set[int]:
    """Children of ``node`` from which ``target`` is reachable going down."""
    hops = set()
    for child, ps in parents.items():
        if node in ps and (child == target or target in descendants(parents, child)):
            hops.add(child)
    return hops


def link_success(trace: LinkTrace, src: int, dst: int, radio: RadioParams) -> float:
    """Delivery probability averaged over the trace's frames."""
    total = 0.0
    for f in range(trace.n_frames):
        m, s = trace.mean_db[f][src][dst], trace.std_db[f][src][dst]
        margin = radio.link_budget_db - m
        total += (1.0 if margin >= 0 else 0.0) if s == 0 else NormalDist().cdf(margin / s)
    return total / trace.n_frames


def best_path_tree(trace: LinkTrace, radio: RadioParams, sink: int = SINK) -> dict[int, int]:
    """Minimum expected-transmission-count tree toward the sink."""
    cost = {sink: 0.0}
    parent = {}
    heap = [(0.0, sink)]
    done = set()
    while heap:
        c, n = heapq.heappop(heap)
        if n in done:
            continue
        done.add(n)
        for m in range(N_NODES):
            if m in done or m == n:
                continue
            p = min(link_success(trace, m, n, radio), link_success(trace, n, m, radio))
            if p < 0.05:
                continue
            nc = c + 1.0 / p
            if nc < cost.get(m, math.inf):
                cost[m] = nc
                parent[m] = n
                heapq.heappush(heap, (nc, m))
    return parent


def estimate_attenuation(trace: LinkTrace, now: float, src: int, target: int,
                         radio: RadioParams) -> float:
    """Least total attenuation over usable links of the current frame."""
    if src == target:
        return 0.0
    f = trace.frame_at(now)
    means = trace.mean_db[f]
    best = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        c, n = heapq.heappop(heap)
        if n == target:
            return c
        if c > best.get(n, math.inf):
            continue
        for m in range(N_NODES):
            if m == n:
                continue
            a = means[n][m]
            if a > radio.link_budget_db:
                continue
            if c + a < best.get(m, math.inf):
                best[m] = c + a
                heapq.heappush(heap, (c + a, m))
    return math.inf


def choose_min_attenuation(replies, own_estimate: float = math.inf, target: int | None = None):
    """Pick the replier with the smallest reported estimate.

    Only repliers closer (by estimate) than the requester qualify, except
    the destination itself.
    """
    valid = [(est, rid) for rid, est in replies if rid == target or est < own_estimate]
    if not valid:
        return None
    return min(valid)[1]


# --- stateful routers -----------------------------------------------------


class Router:
    """Base: subclasses answer ``upstream``/``downstream`` synchronously."""

    negotiated = False
    flooding = False

    def __init__(self, config: StrategyConfig):
        self.config = config
        self.net = None

    def attach(self, net):
        self.net = net

    def start(self):
        pass

    def upstream(self, node: int, packet=None) -> set[int]:
        raise NotImplementedError

    def downstream(self, node: int, target: int, packet=None) -> set[int]:
        raise NotImplementedError

    def next_hops(self, node: int, target: int, packet=None) -> set[int]:
        if target == SINK:
            return self.upstream(node, packet)
        return self.downstream(node, target, packet)

    def on_frame(self, node: int, frame):
        pass


class ParentTableRouter(Router):
    """APAP and TreeBased: fixed parent tables, reversed for down-stream."""

    def __init__(self, config: StrategyConfig, parents: dict):
        super().__init__(config)
        self.parents = {k: tuple(v) for k, v in parents.items()}

    def upstream(self, node, packet=None):
        hops = set(self.parents.get(node, ()))
        if not hops:
            raise NoRoute(f"node {node} has no parent")
        return hops

    def downstream(self, node, target, packet=None):
        hops = reverse_hops(self.parents, node, target)
        if not hops:
            raise NoRoute(f"no child of {node} leads to {target}")
        return hops


class FloodRouter(Router):
    flooding = True

    def upstream(self, node, packet=None):
        if packet is not None and packet.ttl <= 0:
            raise NoRoute("ttl exhausted")
        return {n for n in range(N_NODES) if n != node}

    def downstream(self, node, target, packet=None):
        return self.upstream(node, packet)


class CtpRouter(Router):
    """Beacon-driven tree: each node picks the neighbour minimising
    advertised path ETX plus its own link ETX estimate."""

    ALPHA = 0.7

    def __init__(self, config: StrategyConfig):
        super().__init__(config)
        self.parent: dict[int, int | None] = {}
        self.path_etx: dict[int, float] = {}
        self.quality: dict[tuple[int, int], float] = {}
        self.last_seq: dict[tuple[int, int], int] = {}
        self.last_heard: dict[tuple[int, int], float] = {}
        self.advert: dict[tuple[int, int], tuple[float, int | None]] = {}
        self.seq: dict[int, int] = {}
        self.changes = 0

    def attach(self, net):
        super().attach(net)
        for n in range(N_NODES):
            self.parent[n] = None
            self.path_etx[n] = 0.0 if n == SINK else math.inf
            self.seq[n] = 0

    def start(self):
        rng = self.net.rng_for("ctp")
        for n in range(N_NODES):
            self.net.sched.at(rng.uniform(0, 50.0), self._beacon, n, rng)

    def _beacon(self, node, rng):
        self.seq[node] += 1
        self._recompute(node)
        body = (node, self.path_etx[node], self.parent[node], self.seq[node])
        self.net.send_control(node, "beacon", 8, body)
        jitter = rng.uniform(-0.1, 0.1) * self.config.beacon_interval_ms
        self.net.sched.after(self.config.beacon_interval_ms + jitter, self._beacon, node, rng)

    def on_frame(self, node, frame):
        if frame.kind != "beacon":
            return
        sender, etx, parent, seq = frame.body
        key = (node, sender)
        q = self.quality.get(key)
        if q is None:
            q = 1.0
        else:
            missed = max(seq - self.last_seq[key] - 1, 0)
            q = q * self.ALPHA ** missed
            q = self.ALPHA * q + (1 - self.ALPHA)
        self.quality[key] = q
        self.last_seq[key] = seq
        self.last_heard[key] = self.net.sched.now
        self.advert[key] = (etx, parent)
        self._recompute(node)

    def _link_etx(self, node, nb):
        q = self.quality.get((node, nb))
        if q is None:
            return math.inf
        silent = (self.net.sched.now - self.last_heard[(node, nb)]) / self.config.beacon_interval_ms
        if silent > 1.5:
            q *= self.ALPHA ** int(silent)
        return 1.0 / max(q, 1e-3)

    def _recompute(self, node):
        if node == SINK:
            return
        best, best_cost = None, math.inf
        for (me, nb), (etx, nb_parent) in self.advert.items():
            if me != node or nb_parent == node or math.isinf(etx):
                continue
            cost = etx + self._link_etx(node, nb)
            if cost < best_cost:
                best, best_cost = nb, cost
        current = self.parent[node]
        if current is not None and best is not None and current != best:
            cur_adv = self.advert.get((node, current))
            if cur_adv is not None and cur_adv[1] != node and not math.isinf(cur_adv[0]):
                cur_cost = cur_adv[0] + self._link_etx(node, current)
                if cur_cost <= best_cost + 0.5:
                    best, best_cost = current, cur_cost
        if best != current:
            self.changes += 1
        self.parent[node] = best
        self.path_etx[node] = best_cost if best is not None else math.inf

    def set_parents(self, parents: dict):
        """Force the tree (used to script topology changes)."""
        for n, p in parents.items():
            if p != self.parent.get(n):
                self.changes += 1
            self.parent[n] = p

    def current_parents(self) -> dict[int, tuple[int, ...]]:
        return {n: (p,) for n, p in self.parent.items() if p is not None and n != SINK}

    def upstream(self, node, packet=None):
        p = self.parent.get(node)
        if p is None:
            raise NoRoute(f"node {node} has no parent yet")
        return {p}

    def downstream(self, node, target, packet=None):
        hops = reverse_hops(self.current_parents(), node, target)
        if not hops:
            raise NoRoute(f"no child of {node} leads to {target}")
        return hops


class MiniAttRouter(Router):
    """REQ/REP negotiation: the replier with the lowest attenuation estimate
    towards the destination wins."""

    negotiated = True

    def estimate(self, node, target):
        return estimate_attenuation(self.net.trace, self.net.sched.now, node, target, self.net.radio)

    def upstream(self, node, packet=None):
        raise NoRoute("MiniAtt chooses its next hop by negotiation")

    downstream = upstream


def make_router(config: StrategyConfig, trace: LinkTrace, radio: RadioParams) -> Router:
    kind = config.kind
    if kind == StrategyKind.APAP:
        return ParentTableRouter(config, config.parents)
    if kind == StrategyKind.TREE:
        tree = config.trees.get(trace.posture)
        if tree is None:
            tree = best_path_tree(trace, radio)
        return ParentTableRouter(config, {k: (v,) for k, v in tree.items()})
    if kind == StrategyKind.CTP:
        return CtpRouter(config)
    if kind == StrategyKind.FLOOD:
        return FloodRouter(config)
    return MiniAttRouter(config)


def route_upstream(router: Router, node: int, packet=None) -> set[int]:
    return router.upstream(node, packet)


def route_downstream(router: Router, node: int, target: int, packet=None) -> set[int]:
    return router.downstream(node, target, packet)
