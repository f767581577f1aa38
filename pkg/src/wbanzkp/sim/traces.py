"""Per-posture link attenuation traces.

A trace gives, for every frame and every directed link among the seven
on-body nodes, a mean attenuation and a shadowing standard deviation (dB).
Traces live in CSV files (``posture,frame,src,dst,mean_db,std_db``), one per
posture, with frame durations in a ``frames.cfg`` sidecar.
"""
from __future__ import annotations

import configparser
import csv
import enum
import math
import os
import random
from dataclasses import dataclass
from pathlib import Path

N_NODES = 7
SINK = 1
NODE_NAMES = ("navel", "chest", "head", "upper_arm", "ankle", "thigh", "wrist")
SOURCES = (0, 2, 3, 4, 5, 6)
TRACE_DIR_ENV = "WBAN_TRACE_DIR"
DEFAULT_FRAME_MS = 100.0
CSV_HEADER = ["posture", "frame", "src", "dst", "mean_db", "std_db"]


class Posture(str, enum.Enum):
    WALK = "walk"
    RUN = "run"
    WEAK = "weak"
    SIT = "sit"
    WEAR = "wear"
    SLEEP = "sleep"
    LIE = "lie"


class MissingTrace(FileNotFoundError):
    pass


class MissingTraceEntry(KeyError):
    pass


class TraceFormatError(ValueError):
    pass


@dataclass
class LinkTrace:
    posture: str
    mean_db: list  # [frame][src][dst]
    std_db: list
    frame_duration_ms: float = DEFAULT_FRAME_MS

    def __post_init__(self):
        if not self.mean_db:
            raise TraceFormatError("trace has no frames")
        for f, (means, stds) in enumerate(zip(self.mean_db, self.std_db)):
            for s in range(N_NODES):
                for d in range(N_NODES):
                    if s == d:
                        continue
                    m, sd = means[s][d], stds[s][d]
                    if m is None or sd is None or math.isnan(m) or math.isnan(sd):
                        raise MissingTraceEntry(f"{self.posture}: frame {f} link {s}->{d} missing")
                    if sd < 0:
                        raise TraceFormatError(f"{self.posture}: negative std on {s}->{d}")
        if self.frame_duration_ms <= 0:
            raise TraceFormatError("frame duration must be positive")

    @property
    def n_frames(self) -> int:
        return len(self.mean_db)

    def frame_at(self, now_ms: float) -> int:
        return int(now_ms // self.frame_duration_ms) % self.n_frames

    def link(self, src: int, dst: int, now_ms: float) -> tuple[float, float]:
        if not (0 <= src < N_NODES and 0 <= dst < N_NODES) or src == dst:
            raise MissingTraceEntry(f"no link {src}->{dst}")
        f = self.frame_at(now_ms)
        return self.mean_db[f][src][dst], self.std_db[f][src][dst]

    def average_mean(self, src: int, dst: int) -> float:
        return sum(fr[src][dst] for fr in self.mean_db) / self.n_frames

    def average_std(self, src: int, dst: int) -> float:
        return sum(fr[src][dst] for fr in self.std_db) / self.n_frames

    # ---- construction helpers

    @classmethod
    def uniform(cls, mean_db: float = 0.0, std_db: float = 0.0, posture: str = "perfect",
                frames: int = 1, frame_duration_ms: float = DEFAULT_FRAME_MS) -> "LinkTrace":
        means = [[[mean_db] * N_NODES for _ in range(N_NODES)] for _ in range(frames)]
        stds = [[[std_db] * N_NODES for _ in range(N_NODES)] for _ in range(frames)]
        return cls(posture, means, stds, frame_duration_ms)

    @classmethod
    def from_links(cls, links: dict, default_db: float = 200.0, std_db: float = 0.0,
                   posture: str = "custom", symmetric: bool = True) -> "LinkTrace":
        """Single-frame trace: listed links get their attenuation, others ``default_db``."""
        means = [[default_db] * N_NODES for _ in range(N_NODES)]
        for (s, d), m in links.items():
            means[s][d] = m
            if symmetric:
                means[d][s] = m
        stds = [[std_db] * N_NODES for _ in range(N_NODES)]
        return cls(posture, [means], [stds])

    # ---- CSV

    def to_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for f in range(self.n_frames):
                for s in range(N_NODES):
                    for d in range(N_NODES):
                        if s != d:
                            w.writerow([self.posture, f, s, d,
                                        f"{self.mean_db[f][s][d]:.2f}", f"{self.std_db[f][s][d]:.2f}"])

    @classmethod
    def from_csv(cls, path: str | Path, frame_duration_ms: float = DEFAULT_FRAME_MS) -> "LinkTrace":
        path = Path(path)
        if not path.exists():
            raise MissingTrace(str(path))
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_HEADER:
                raise TraceFormatError(f"{path}: header must be {','.join(CSV_HEADER)}")
            for row in reader:
                rows.append(row)
        if not rows:
            raise TraceFormatError(f"{path}: no rows")
        postures = {r["posture"] for r in rows}
        if len(postures) != 1:
            raise TraceFormatError(f"{path}: mixes postures {sorted(postures)}")
        n_frames = max(int(r["frame"]) for r in rows) + 1
        nan = float("nan")
        means = [[[nan] * N_NODES for _ in range(N_NODES)] for _ in range(n_frames)]
        stds = [[[nan] * N_NODES for _ in range(N_NODES)] for _ in range(n_frames)]
        for r in rows:
            f, s, d = int(r["frame"]), int(r["src"]), int(r["dst"])
            means[f][s][d] = float(r["mean_db"])
            stds[f][s][d] = float(r["std_db"])
        return cls(postures.pop(), means, stds, frame_duration_ms)


def default_trace_dir() -> Path:
    env = os.environ.get(TRACE_DIR_ENV)
    return Path(env) if env else Path(__file__).with_name("traces")


def frame_durations(directory: Path) -> dict[str, float]:
    cfg = configparser.ConfigParser()
    cfg.read(directory / "frames.cfg")
    out = {}
    for p in Posture:
        if cfg.has_section(p.value):
            out[p.value] = cfg.getfloat(p.value, "frame_duration_ms")
        else:
            out[p.value] = cfg.getfloat("DEFAULT", "frame_duration_ms", fallback=DEFAULT_FRAME_MS)
    return out


def load_posture(posture: Posture | str, directory: str | Path | None = None) -> LinkTrace:
    posture = Posture(posture)
    directory = Path(directory) if directory else default_trace_dir()
    path = directory / f"{posture.value}.csv"
    if not path.exists():
        raise MissingTrace(f"no trace for posture {posture.value} in {directory}")
    return LinkTrace.from_csv(path, frame_durations(directory)[posture.value])


# --- synthetic defaults ----------------------------------------------------

# Standing body coordinates (cm) used to derive base attenuation.
_POSITIONS = {
    0: (0.0, 105.0),
    1: (0.0, 135.0),
    2: (0.0, 165.0),
    3: (-22.0, 130.0),
    4: (8.0, 10.0),
    5: (10.0, 75.0),
    6: (-28.0, 95.0),
}
_EDGE = (4, 6)

# Per-posture knobs: frames, base std, edge-link swing (dB), sink-link penalty
# (dB), offset for links not touching the sink, shadowing on impaired links.
SYNTHETIC_PROFILES = {
    Posture.WALK: dict(frames=30, std=3.0, edge=12.0, sink=0.0, far=0.0, impaired_std=4.0),
    Posture.RUN: dict(frames=20, std=3.5, edge=18.0, sink=0.0, far=0.0, impaired_std=5.0),
    Posture.WEAK: dict(frames=40, std=3.0, edge=4.0, sink=10.0, far=0.0, impaired_std=4.0),
    Posture.SIT: dict(frames=30, std=3.0, edge=2.0, sink=0.0, far=0.0, impaired_std=3.0),
    Posture.WEAR: dict(frames=30, std=3.0, edge=4.0, sink=12.0, far=3.0, impaired_std=4.0),
    Posture.SLEEP: dict(frames=30, std=3.0, edge=0.0, sink=36.0, far=-6.0, impaired_std=5.0),
    Posture.LIE: dict(frames=30, std=3.0, edge=12.0, sink=4.0, far=0.0, impaired_std=4.0),
}


def _base_db(s: int, d: int, posture: Posture) -> float:
    (x1, y1), (x2, y2) = _POSITIONS[s], _POSITIONS[d]
    if posture == Posture.SIT and 4 in (s, d):
        # seated: the ankle comes up next to the thigh
        x1, y1 = (30.0, 50.0) if s == 4 else (x1, y1)
        x2, y2 = (30.0, 50.0) if d == 4 else (x2, y2)
    return 8.0 + 0.30 * math.hypot(x1 - x2, y1 - y2)


def synthetic_trace(posture: Posture | str) -> LinkTrace:
    posture = Posture(posture)
    prof = SYNTHETIC_PROFILES[posture]
    rng = random.Random(f"trace/{posture.value}")
    frames = prof["frames"]
    phase = {n: rng.uniform(0, 2 * math.pi) for n in range(N_NODES)}
    means, stds = [], []
    for f in range(frames):
        m = [[0.0] * N_NODES for _ in range(N_NODES)]
        sd = [[0.0] * N_NODES for _ in range(N_NODES)]
        for s in range(N_NODES):
            for d in range(s + 1, N_NODES):
                val = _base_db(s, d, posture)
                std = prof["std"]
                edge_nodes = [n for n in (s, d) if n in _EDGE]
                for n in edge_nodes:
                    swing = 0.5 + 0.5 * math.sin(2 * math.pi * f / frames + phase[n])
                    val += prof["edge"] * swing
                    std = max(std, prof["impaired_std"]) if prof["edge"] else std
                if SINK in (s, d):
                    if prof["sink"]:
                        wobble = 0.75 + 0.25 * math.sin(2 * math.pi * f / frames + phase[(s + d) % N_NODES])
                        val += prof["sink"] * wobble
                        std = max(std, prof["impaired_std"])
                else:
                    val += prof["far"]
                val += rng.gauss(0.0, 0.5)
                m[s][d] = m[d][s] = round(max(val, 0.0), 2)
                sd[s][d] = sd[d][s] = round(std, 2)
        means.append(m)
        stds.append(sd)
    return LinkTrace(posture.value, means, stds, DEFAULT_FRAME_MS)


def write_default_traces(directory: str | Path):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for p in Posture:
        synthetic_trace(p).to_csv(directory / f"{p.value}.csv")
    cfg = configparser.ConfigParser()
    cfg["DEFAULT"] = {"frame_duration_ms": f"{DEFAULT_FRAME_MS:g}"}
    for p in Posture:
        cfg[p.value] = {"frame_duration_ms": f"{DEFAULT_FRAME_MS:g}"}
    with open(directory / "frames.cfg", "w") as fh:
        cfg.write(fh)
