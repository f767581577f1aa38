"""Experiment matrices: plan files, seeded repetitions, aggregation and CSV."""
from __future__ import annotations

import configparser
import csv
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .adversary import ScenarioName, Verdict, run_scenario
from .handshake import Scheme
from .sim.network import RunMetrics, SimScheme, run_simulation
from .sim.routing import StrategyConfig, StrategyKind
from .sim.traces import Posture, default_trace_dir, load_posture
from .stats import mean_beta

METRICS_HEADER = ["scheme", "strategy", "posture", "rate_pps", "seed", "generated", "received",
                  "ratio", "avg_delay_ms", "transmissions"]
AGGREGATE_HEADER = ["scheme", "strategy", "posture", "rate_pps", "runs",
                    "ratio", "ratio_beta", "avg_delay_ms", "avg_delay_ms_beta",
                    "transmissions", "transmissions_beta"]
ATTACK_HEADER = ["scheme", "scenario", "seed", "verdict"]

# strategy/run knobs that a plan may set per cell
CELL_KNOBS = {
    "ttl": int,
    "beacon_interval_ms": float,
    "req_retry_timeout_ms": float,
    "max_retransmissions": int,
    "timeout_ms": float,
    "repetitions": int,
    "duration_s": float,
}
SELECTORS = ("scheme", "strategy", "posture", "rate_pps")


class InvalidPlan(ValueError):
    pass


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


@dataclass(frozen=True)
class Cell:
    scheme: str
    strategy: str
    posture: str
    rate_pps: float
    repetitions: int
    duration_s: float
    knobs: tuple = ()

    @property
    def key(self) -> tuple:
        return (self.scheme, self.strategy, self.posture, self.rate_pps)


@dataclass
class ExperimentPlan:
    schemes: tuple = tuple(s.value for s in SimScheme)
    strategies: tuple = tuple(k.value for k in StrategyKind)
    postures: tuple = tuple(p.value for p in Posture)
    rates_pps: tuple = (1.0, 5.0, 10.0)
    repetitions: int = 200
    base_seed: int = 0
    duration_s: float = 60.0
    knobs: dict = field(default_factory=dict)
    overrides: list = field(default_factory=list)  # (selector dict, knob dict)

    def __post_init__(self):
        try:
            self.schemes = tuple(SimScheme(s).value for s in self.schemes)
            self.strategies = tuple(StrategyKind(s).value for s in self.strategies)
            self.postures = tuple(Posture(p).value for p in self.postures)
        except ValueError as exc:
            raise InvalidPlan(str(exc)) from None
        self.rates_pps = tuple(float(r) for r in self.rates_pps)
        for name in ("schemes", "strategies", "postures", "rates_pps"):
            if not getattr(self, name):
                raise InvalidPlan(f"{name} must not be empty")
        if any(r < 0 or math.isnan(r) for r in self.rates_pps):
            raise InvalidPlan("rates must be non-negative")
        if self.repetitions < 2:
            raise InvalidPlan("repetitions must be at least 2")
        if not self.duration_s > 0:
            raise InvalidPlan("duration_s must be positive")

    def cells(self) -> list[Cell]:
        out = []
        for scheme in self.schemes:
            for strategy in self.strategies:
                for posture in self.postures:
                    for rate in self.rates_pps:
                        knobs = dict(self.knobs)
                        for sel, over in self.overrides:
                            if _matches(sel, scheme, strategy, posture, rate):
                                knobs.update(over)
                        reps = int(knobs.pop("repetitions", self.repetitions))
                        dur = float(knobs.pop("duration_s", self.duration_s))
                        if reps < 2:
                            raise InvalidPlan("repetitions must be at least 2")
                        out.append(Cell(scheme, strategy, posture, rate, reps, dur,
                                        tuple(sorted(knobs.items()))))
        return sorted(out, key=lambda c: (self.schemes.index(c.scheme), c.strategy, c.posture, c.rate_pps))

    # ---- plan files

    @classmethod
    def from_text(cls, text: str) -> "ExperimentPlan":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise InvalidPlan(f"unreadable plan: {exc}") from None
        if "cell-defaults" not in parser:
            raise InvalidPlan("plan needs a [cell-defaults] section")
        base = parser["cell-defaults"]
        kwargs, knobs = {}, {}
        for key, value in base.items():
            if key in ("schemes", "strategies", "postures"):
                kwargs[key] = tuple(_split(value))
            elif key == "rates_pps":
                kwargs[key] = tuple(_num(v, key) for v in _split(value))
            elif key == "base_seed":
                kwargs[key] = int(_num(value, key))
            elif key in CELL_KNOBS:
                v = CELL_KNOBS[key](_num(value, key))
                if key in ("repetitions", "duration_s"):
                    kwargs[key] = v
                else:
                    knobs[key] = v
            else:
                raise InvalidPlan(f"unknown key {key!r} in [cell-defaults]")
        overrides = []
        for name in parser.sections():
            if name == "cell-defaults":
                continue
            sel, over = {}, {}
            for key, value in parser[name].items():
                if key in SELECTORS:
                    sel[key] = _num(value, key) if key == "rate_pps" else value.strip()
                elif key in CELL_KNOBS:
                    over[key] = CELL_KNOBS[key](_num(value, key))
                else:
                    raise InvalidPlan(f"unknown key {key!r} in [{name}]")
            overrides.append((sel, over))
        return cls(knobs=knobs, overrides=overrides, **kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentPlan":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InvalidPlan(f"cannot read plan {path}: {exc}") from None
        return cls.from_text(text)


def _num(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise InvalidPlan(f"{key}: {value!r} is not a number") from None


def _matches(sel: dict, scheme, strategy, posture, rate) -> bool:
    return all((
        sel.get("scheme", scheme) == scheme,
        sel.get("strategy", strategy) == strategy,
        sel.get("posture", posture) == posture,
        float(sel.get("rate_pps", rate)) == rate,
    ))


@dataclass(frozen=True)
class AggregateRow:
    scheme: str
    strategy: str
    posture: str
    rate_pps: float
    runs: int
    ratio: float
    ratio_beta: float
    avg_delay_ms: float
    avg_delay_ms_beta: float
    transmissions: float
    transmissions_beta: float

    def csv_row(self) -> list:
        return [self.scheme, self.strategy, self.posture, f"{self.rate_pps:g}", self.runs,
                f"{self.ratio:.6f}", f"{self.ratio_beta:.6f}",
                f"{self.avg_delay_ms:.3f}", f"{self.avg_delay_ms_beta:.3f}",
                f"{self.transmissions:.3f}", f"{self.transmissions_beta:.3f}"]


def aggregate(cell: Cell, runs: list[RunMetrics]) -> AggregateRow:
    ratio = mean_beta([m.ratio for m in runs])
    tx = mean_beta([m.total_transmissions for m in runs])
    # delay is undefined for a run that delivered nothing; leave such runs out
    delays = [m.avg_delay_ms for m in runs if m.packets_received_at_sink]
    if len(delays) >= 2:
        delay = mean_beta(delays)
    elif delays:
        delay = (delays[0], 0.0)
    else:
        delay = (math.nan, math.nan)
    return AggregateRow(cell.scheme, cell.strategy, cell.posture, cell.rate_pps, len(runs),
                        ratio[0], ratio[1], delay[0], delay[1], tx[0], tx[1])


def run_cell_once(cell: Cell, seed: int, trace_dir=None) -> RunMetrics:
    knobs = dict(cell.knobs)
    timeout = knobs.pop("timeout_ms", None)
    strategy = StrategyConfig(StrategyKind(cell.strategy), **knobs)
    options = {} if timeout is None else {"timeout_ms": timeout}
    return run_simulation(cell.scheme, strategy, cell.posture, cell.rate_pps, cell.duration_s, seed,
                          trace_dir=trace_dir, **options)


def _run_job(args):
    cell, seed, trace_dir = args
    return run_cell_once(cell, seed, trace_dir)


def run_plan(plan: ExperimentPlan, jobs: int = 1, trace_dir=None):
    """Run every cell R times (seed = base_seed + run index).

    Returns ``(rows, runs)``: one AggregateRow per cell in cell-key order, and
    every individual RunMetrics in the same order.
    """
    directory = Path(trace_dir) if trace_dir else default_trace_dir()
    for p in plan.postures:
        load_posture(p, directory)  # MissingTrace before any work starts
    cells = plan.cells()
    work = [(c, plan.base_seed + i, directory) for c in cells for i in range(c.repetitions)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, work, chunksize=max(1, len(work) // (jobs * 8))))
    else:
        results = [_run_job(w) for w in work]
    rows, pos = [], 0
    for c in cells:
        chunk = results[pos:pos + c.repetitions]
        pos += c.repetitions
        rows.append(aggregate(c, chunk))
    return rows, results


def metrics_csv(runs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in runs:
        w.writerow(m.csv_row())
    return buf.getvalue()


def aggregate_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER)
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


@dataclass(frozen=True)
class AttackRow:
    scheme: str
    scenario: str
    seed: int
    verdict: str


def run_attacks(schemes=(Scheme.BANZKP, Scheme.BAN_GZKP), seeds=(0,), params=None) -> list[AttackRow]:
    rows = []
    for scheme in schemes:
        for seed in seeds:
            for name in ScenarioName:
                res = run_scenario(name, scheme, seed=seed, params=params)
                rows.append(AttackRow(Scheme(scheme).value, name.value, seed, res.verdict.value))
    return rows


def attack_regressions(rows) -> list[AttackRow]:
    """BAN-GZKP rows that were not blocked."""
    return [r for r in rows if r.scheme == Scheme.BAN_GZKP.value and r.verdict != Verdict.BLOCKED.value]


def attacks_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ATTACK_HEADER)
    for r in rows:
        w.writerow([r.scheme, r.scenario, r.seed, r.verdict])
    return buf.getvalue()
