import random
from statistics import NormalDist

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbanzkp.sim.channel import ConfigError, RadioParams, step_channel
from wbanzkp.sim.engine import Scheduler
from wbanzkp.sim.mac import BROADCAST, Frame, Mac, MacParams, Medium, QueueOverflow
from wbanzkp.sim.network import RunMetrics, Tracker
from wbanzkp.sim.traces import (
    CSV_HEADER,
    N_NODES,
    LinkTrace,
    MissingTrace,
    MissingTraceEntry,
    Posture,
    TraceFormatError,
    default_trace_dir,
    load_posture,
    synthetic_trace,
    write_default_traces,
)


# ---- traces

def test_shipped_traces_cover_every_posture():
    for p in Posture:
        trace = load_posture(p)
        assert trace.posture == p.value
        assert trace.frame_duration_ms == 100.0
        assert trace.n_frames >= 20


def test_shipped_traces_match_the_generator(tmp_path):
    write_default_traces(tmp_path)
    shipped = default_trace_dir()
    for name in [f"{p.value}.csv" for p in Posture] + ["frames.cfg"]:
        assert (tmp_path / name).read_bytes() == (shipped / name).read_bytes()


def test_sleep_trace_hurts_links_next_to_the_sink():
    sleep, walk = load_posture("sleep"), load_posture("walk")
    for s in (0, 3, 5):
        assert sleep.average_mean(s, 1) > walk.average_mean(s, 1) + 20


def test_csv_round_trip(tmp_path):
    trace = synthetic_trace("run")
    path = tmp_path / "run.csv"
    trace.to_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    again = tmp_path / "again.csv"
    LinkTrace.from_csv(path).to_csv(again)
    assert again.read_bytes() == path.read_bytes()


def test_missing_link_row_is_reported(tmp_path):
    path = tmp_path / "walk.csv"
    LinkTrace.uniform(30.0, 2.0, posture="walk").to_csv(path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(line for line in lines if not line.startswith("walk,0,2,5,")) + "\n")
    with pytest.raises(MissingTraceEntry):
        LinkTrace.from_csv(path)


def test_bad_header_and_negative_std(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("posture,frame,src,dst,mean\nwalk,0,0,1,3\n")
    with pytest.raises(TraceFormatError):
        LinkTrace.from_csv(path)
    with pytest.raises(TraceFormatError):
        LinkTrace.uniform(10.0, -1.0)


def test_missing_posture_file(tmp_path):
    with pytest.raises(MissingTrace):
        load_posture("lie", tmp_path)


def test_env_var_points_at_trace_dir(tmp_path, monkeypatch):
    LinkTrace.uniform(1.0, 0.0, posture="sit").to_csv(tmp_path / "sit.csv")
    monkeypatch.setenv("WBAN_TRACE_DIR", str(tmp_path))
    assert load_posture("sit").n_frames == 1
    with pytest.raises(MissingTrace):
        load_posture("walk")


@given(st.floats(0, 1e7, allow_nan=False))
def test_frames_loop(now):
    trace = synthetic_trace("walk")
    assert 0 <= trace.frame_at(now) < trace.n_frames
    assert trace.frame_at(now) == trace.frame_at(now + trace.n_frames * trace.frame_duration_ms)


def test_self_link_is_not_a_link():
    with pytest.raises(MissingTraceEntry):
        LinkTrace.uniform().link(3, 3, 0.0)


# ---- channel

def test_radio_rejects_inverted_power():
    with pytest.raises(ConfigError):
        RadioParams(tx_power_dbm=-100.0, sensitivity_dbm=-90.0)


def test_airtime():
    assert RadioParams().airtime_ms(33) == pytest.approx(50 * 8 / 250)


def test_strong_link_delivers_weak_link_drops():
    rng = random.Random(0)
    assert step_channel(LinkTrace.uniform(20.0, 0.0), (0, 1), 0.0, rng)
    assert not step_channel(LinkTrace.uniform(50.0, 0.0), (0, 1), 0.0, rng)


@pytest.mark.parametrize("mean,std", [(40.0, 5.0), (35.0, 4.0), (44.0, 3.0)])
def test_delivery_rate_follows_gaussian_tail(mean, std):
    rng = random.Random(11)
    trace = LinkTrace.uniform(mean, std)
    n = 100_000
    hits = sum(step_channel(trace, (2, 1), 0.0, rng) for _ in range(n))
    expected = NormalDist().cdf((40.0 - mean) / std)
    assert abs(hits / n - expected) < 0.02


# ---- scheduler

def test_scheduler_orders_by_time_then_insertion():
    sched, seen = Scheduler(), []
    sched.at(5.0, seen.append, "b")
    sched.at(1.0, seen.append, "a")
    sched.at(5.0, seen.append, "c")
    dead = sched.at(3.0, seen.append, "x")
    Scheduler.cancel(dead)
    sched.run(10.0)
    assert seen == ["a", "b", "c"]
    assert sched.now == 10.0


# ---- MAC

class Rig:
    def __init__(self, trace=None, params=None, backoff=None, seed=0):
        self.sched = Scheduler()
        self.metrics = RunMetrics()
        self.tracker = Tracker(self.metrics)
        self.got = {n: [] for n in range(N_NODES)}
        self.medium = Medium(self.sched, trace or LinkTrace.uniform(), RadioParams(),
                             random.Random(seed), N_NODES, self.tracker)
        for n in range(N_NODES):
            self.medium.receivers[n] = self.got[n].append
        self.macs = [Mac(n, self.sched, self.medium, random.Random(seed * 10 + n),
                         params or MacParams(), self.tracker, backoff) for n in range(N_NODES)]


def test_single_sender_airs_after_one_backoff():
    rig = Rig()
    done = []
    frame = Frame(0, 1, "data", 20, on_done=lambda f, ok: done.append((rig.sched.now, ok)))
    rig.macs[0].send(frame)
    rig.sched.run(100.0)
    assert rig.got[1] == [frame]
    assert rig.metrics.total_transmissions == 1
    t, ok = done[0]
    assert ok
    airtime = RadioParams().airtime_ms(20)
    assert airtime <= t <= airtime + MacParams().backoff_max_ms


def test_forced_tie_collides_at_the_common_receiver():
    # 12 symbols of rx-to-tx turnaround: both senders find the channel idle
    rig = Rig(params=MacParams(turnaround_ms=0.192), backoff=lambda nb: 0.0)
    outcome = []
    for src in (0, 2):
        rig.macs[src].send(Frame(src, 1, "data", 20, on_done=lambda f, ok: outcome.append(ok)))
    rig.sched.run(100.0)
    assert rig.got[1] == []
    assert outcome == [False, False]
    assert rig.metrics.total_transmissions == 2


def test_ideal_cca_defers_the_second_sender():
    rig = Rig(backoff=lambda nb: 0.0 if nb == 0 else 1.0)
    for src in (0, 2):
        rig.macs[src].send(Frame(src, 1, "data", 20))
    rig.sched.run(100.0)
    assert [f.src for f in rig.got[1]] == [0, 2]


def test_collision_is_retried_when_allowed():
    rig = Rig(params=MacParams(turnaround_ms=0.192))
    rig.macs[0]._backoff_fn = lambda nb: 0.0
    delays = iter([0.0, 3.0])
    rig.macs[2]._backoff_fn = lambda nb: next(delays)
    for src in (0, 2):
        rig.macs[src].send(Frame(src, 1, "data", 20, retries_left=1))
    rig.sched.run(100.0)
    assert sorted(f.src for f in rig.got[1]) == [0, 2]
    assert rig.metrics.total_transmissions == 4


def test_broadcast_reaches_everyone_audible():
    links = {(0, 1): 10.0, (0, 2): 10.0}
    rig = Rig(trace=LinkTrace.from_links(links))
    rig.macs[0].send(Frame(0, BROADCAST, "beacon", 8))
    rig.sched.run(50.0)
    assert [n for n, got in rig.got.items() if got] == [1, 2]


def test_queue_overflow_drops_and_counts():
    rig = Rig(params=MacParams(queue_limit=2))
    mac = rig.macs[0]
    mac.enqueue(Frame(0, 1, "data", 20, pid=1))
    mac.enqueue(Frame(0, 1, "data", 20, pid=2))
    with pytest.raises(QueueOverflow):
        mac.enqueue(Frame(0, 1, "data", 20, pid=3))
    assert mac.send(Frame(0, 1, "data", 20, pid=4)) is False
    assert rig.tracker.last_drop == {4: "queue_overflow"}


def test_busy_channel_limit_drops_frame():
    rig = Rig(params=MacParams(max_busy_senses=0), backoff=lambda nb: 0.1)
    rig.macs[2].send(Frame(2, 1, "data", 100))
    rig.macs[0].send(Frame(0, 1, "data", 20, pid=7))
    rig.sched.run(100.0)
    assert rig.tracker.last_drop.get(7) == "channel_access"


def test_mac_params_defaults():
    p = MacParams()
    assert (p.backoff_max_ms, p.max_doublings, p.queue_limit) == (2.24, 4, 64)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), n=st.integers(1, 12))
def test_every_queued_frame_is_emitted_once_on_a_clean_channel(seed, n):
    rig = Rig(seed=seed)
    for i in range(n):
        rig.macs[i % 6 if i % 6 != 1 else 6].send(Frame(i % 6 if i % 6 != 1 else 6, BROADCAST, "b", 10))
    rig.sched.run(10_000.0)
    assert rig.metrics.total_transmissions == n
