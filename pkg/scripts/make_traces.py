"""Regenerate the synthetic posture traces.

Writes one CSV per posture plus frames.cfg. With no argument the shipped
copies inside the package are overwritten, which should be a no-op unless
the generator changed.
"""
import argparse
from pathlib import Path

from wbanzkp.sim.traces import write_default_traces

SHIPPED = Path(__file__).resolve().parents[1] / "src" / "wbanzkp" / "sim" / "traces"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("directory", nargs="?", default=str(SHIPPED))
    args = parser.parse_args()
    write_default_traces(args.directory)
    print(f"traces written to {args.directory}")


if __name__ == "__main__":
    main()
