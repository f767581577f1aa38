"""Simplified CSMA/CA: random backoff, carrier sense, collisions at receivers."""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from .channel import RadioParams, received_power
from .engine import Scheduler
from .traces import LinkTrace

BROADCAST = 255


class QueueOverflow(RuntimeError):
    pass


@dataclass(frozen=True)
class MacParams:
    backoff_max_ms: float = 2.24
    max_doublings: int = 4
    queue_limit: int = 64
    # rx-to-tx turnaround after a clear channel assessment; frames that sense
    # idle within this window of each other collide. 0 means an ideal CCA.
    turnaround_ms: float = 0.0

    def __post_init__(self):
        if self.backoff_max_ms < 0 or self.turnaround_ms < 0 or self.queue_limit < 1:
            raise ValueError("backoff and turnaround must be >= 0, queue_limit >= 1")
    # busy carrier senses tolerated before giving up on a frame; None waits
    max_busy_senses: int | None = None


@dataclass(eq=False)
class Frame:
    """One MAC frame. ``dst`` is a node id or BROADCAST; for multicast the
    frame is broadcast and ``targets`` names who should process it."""

    src: int
    dst: int
    kind: str
    size: int
    body: object = None
    pid: int | None = None
    targets: frozenset | None = None
    retries_left: int = 0
    on_done: object = None  # callable(frame, ok)
    session: object = None  # protocol session that produced the frame, if any

    def stale(self, now: float) -> bool:
        """Output of a session that has since been closed or run out of time."""
        s = self.session
        if s is None or s.completed:
            return False
        return s.closed or (s.role == "responder" and now >= s.timeout_deadline)

    def addressed_to(self, node: int) -> bool:
        if self.dst == BROADCAST:
            return self.targets is None or node in self.targets
        return self.dst == node


class _Tx:
    __slots__ = ("mac", "frame", "end", "audible", "lost")

    def __init__(self, mac, frame, end, audible):
        self.mac = mac
        self.frame = frame
        self.end = end
        self.audible = audible
        self.lost = set()


class Medium:
    """Shared channel. ``audible[r]`` is decided once per transmission by an
    independent shadowing draw; overlapping audible frames collide at ``r``."""

    def __init__(self, sched: Scheduler, trace: LinkTrace, radio: RadioParams,
                 rng: random.Random, n_nodes: int, stats):
        self.sched = sched
        self.trace = trace
        self.radio = radio
        self.rng = rng
        self.n = n_nodes
        self.stats = stats
        self.active: list[_Tx] = []
        self.receivers = [None] * n_nodes  # callables(frame)

    def busy_for(self, node: int) -> bool:
        for tx in self.active:
            if tx.mac.node == node or tx.audible[node]:
                return True
        return False

    def transmit(self, mac: "Mac", frame: Frame):
        now = self.sched.now
        sens = self.radio.sensitivity_dbm
        audible = [False] * self.n
        for r in range(self.n):
            if r != mac.node:
                audible[r] = received_power(self.trace, (mac.node, r), now, self.rng, self.radio) >= sens
        tx = _Tx(mac, frame, now + self.radio.airtime_ms(frame.size), audible)
        for other in self.active:
            # half duplex: a transmitting node hears nothing
            tx.lost.add(other.mac.node)
            other.lost.add(mac.node)
            for r in range(self.n):
                if audible[r] and other.audible[r]:
                    tx.lost.add(r)
                    other.lost.add(r)
        self.active.append(tx)
        self.stats.on_emit(frame)
        self.sched.at(tx.end, self._finish, tx)

    def _finish(self, tx: _Tx):
        self.active.remove(tx)
        frame = tx.frame
        src = tx.mac.node
        got = [r for r in range(self.n) if r != src and tx.audible[r] and r not in tx.lost]
        if frame.dst == BROADCAST:
            ok, reason = True, None
        else:
            ok = frame.dst in got
            reason = None if ok else ("collision" if tx.audible[frame.dst] else "channel")
        tx.mac.tx_done(frame, ok, reason)
        for r in got:
            if frame.addressed_to(r) and self.receivers[r] is not None:
                self.receivers[r](frame)


class Mac:
    def __init__(self, node: int, sched: Scheduler, medium: Medium, rng: random.Random,
                 params: MacParams, stats, backoff=None):
        self.node = node
        self.sched = sched
        self.medium = medium
        self.rng = rng
        self.params = params
        self.stats = stats
        self.queue: deque[Frame] = deque()
        self.busy = False
        self._nb = 0
        self._backoff_fn = backoff

    def enqueue(self, frame: Frame):
        if len(self.queue) >= self.params.queue_limit:
            raise QueueOverflow(f"node {self.node}: queue holds {len(self.queue)} frames")
        self.queue.append(frame)
        if not self.busy:
            self._begin()

    def send(self, frame: Frame) -> bool:
        """Queue ``frame``; on overflow it is dropped and counted lost."""
        try:
            self.enqueue(frame)
        except QueueOverflow:
            self.stats.note_drop(frame.pid, "queue_overflow")
            if frame.on_done is not None:
                frame.on_done(frame, False)
            return False
        return True

    def _begin(self):
        self.busy = True
        self._nb = 0
        self._schedule_cca()

    def _schedule_cca(self):
        if self._backoff_fn is not None:
            delay = self._backoff_fn(self._nb)
        else:
            window = self.params.backoff_max_ms * 2 ** min(self._nb, self.params.max_doublings)
            delay = self.rng.uniform(0.0, window)
        self.sched.after(delay, self._cca)

    def _cca(self):
        while self.queue and self.queue[0].stale(self.sched.now):
            frame = self.queue.popleft()
            self.stats.on_purge(frame)
            if frame.on_done is not None:
                frame.on_done(frame, False)
        if not self.queue:
            self.busy = False
            return
        if self.medium.busy_for(self.node):
            self._nb += 1
            limit = self.params.max_busy_senses
            if limit is not None and self._nb > limit:
                frame = self.queue.popleft()
                self.stats.note_drop(frame.pid, "channel_access")
                if frame.on_done is not None:
                    frame.on_done(frame, False)
                self._next()
            else:
                self._schedule_cca()
            return
        if self.params.turnaround_ms > 0:
            self.sched.after(self.params.turnaround_ms, self.medium.transmit, self, self.queue[0])
        else:
            self.medium.transmit(self, self.queue[0])

    def tx_done(self, frame: Frame, ok: bool, reason: str | None):
        head = self.queue.popleft()
        assert head is frame
        if not ok and frame.retries_left > 0:
            frame.retries_left -= 1
            self.queue.appendleft(frame)
            self._begin()
            return
        if not ok:
            self.stats.note_drop(frame.pid, reason or "channel")
        if frame.on_done is not None:
            frame.on_done(frame, ok)
        self._next()

    def _next(self):
        self.busy = False
        if self.queue:
            self._begin()
