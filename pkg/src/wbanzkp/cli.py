"""Command-line front end.

Exit codes: 0 ok, 1 invalid plan, 2 a BAN-GZKP attack scenario was not
blocked, 3 a posture trace is missing.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import (
    ExperimentPlan,
    InvalidPlan,
    aggregate_csv,
    attack_regressions,
    attacks_csv,
    metrics_csv,
    run_attacks,
    run_plan,
)
from .handshake import Scheme, provision, run_session
from .sim.traces import TRACE_DIR_ENV, MissingTrace
from .zkp_math import GroupParams

EXIT_OK, EXIT_PLAN, EXIT_ATTACK, EXIT_TRACE = 0, 1, 2, 3


def handshake_vectors(seed: int = 0, params: GroupParams | None = None) -> str:
    """Hex dump of the wire messages of seeded sessions, one per line.

    BAN-GZKP gets two sessions between the same pair so the fast path shows.
    """
    params = params or GroupParams()
    lines = [f"# handshake vectors seed={seed} modulus_bits={params.modulus.bit_length()}"]
    for scheme in Scheme:
        nodes = provision([0, 1], scheme, params, seed=seed)
        sessions = 2 if scheme == Scheme.BAN_GZKP else 1
        for s in range(sessions):
            data = f"vector-{scheme.value}-{s}".encode()
            delivered, wire = run_session(nodes[0], nodes[1], data)
            for i, msg in enumerate(wire, 1):
                lines.append(f"{scheme.value} session={s} step={i} kind={msg.kind.name} "
                             f"hex={msg.encode().hex()}")
            lines.append(f"{scheme.value} session={s} delivered={delivered.hex() if delivered else '-'}")
    return "\n".join(lines) + "\n"


def _write(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_run(args) -> int:
    try:
        plan = ExperimentPlan.from_file(args.plan)
        if args.seed is not None:
            plan.base_seed = args.seed
        rows, runs = run_plan(plan, jobs=args.jobs, trace_dir=args.trace_dir)
    except InvalidPlan as exc:
        print(f"invalid plan: {exc}", file=sys.stderr)
        return EXIT_PLAN
    except MissingTrace as exc:
        print(f"missing trace: {exc}", file=sys.stderr)
        return EXIT_TRACE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(runs))
    (out / "aggregate.csv").write_text(aggregate_csv(rows))
    print(f"{len(rows)} cells, {len(runs)} runs -> {out}")
    return EXIT_OK


def cmd_attacks(args) -> int:
    schemes = args.scheme or [s.value for s in Scheme]
    base = args.seed or 0
    rows = run_attacks(schemes, seeds=range(base, base + args.seeds))
    _write(attacks_csv(rows), args.out)
    bad = attack_regressions(rows)
    for r in bad:
        print(f"regression: {r.scenario} not blocked against {r.scheme} (seed {r.seed})", file=sys.stderr)
    return EXIT_ATTACK if bad else EXIT_OK


def cmd_vectors(args) -> int:
    _write(handshake_vectors(args.seed or 0), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wbanzkp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment plan and write metrics/aggregate CSV")
    r.add_argument("plan")
    r.add_argument("--out", default="results")
    r.add_argument("--seed", type=int, default=None, help="override the plan's base seed")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--trace-dir", default=None, help=f"posture traces (default: ${TRACE_DIR_ENV} or shipped)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("attacks", help="run every attack scenario against the chosen schemes")
    a.add_argument("--scheme", action="append", choices=[s.value for s in Scheme])
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_attacks)

    v = sub.add_parser("handshake-vectors", help="emit golden hex vectors")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_vectors)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
