"""Run every checked-in experiment configuration through the command line driver.

Outputs land under ``out/`` (one directory per run). ``--quick`` shrinks the
wheel grid to 15^3 so the whole set finishes in well under a minute; the
Greece run is skipped unless its map file exists.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from shepard_dp.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

RUNS = [
    ("solve", "linear1d.json", []),
    ("simulate", "linear1d.json", []),
    ("convergence-study", "linear1d_convergence.json", []),
    ("solve", "shortest_path_archipelago.json", []),
    ("solve", "shortest_path_greece.json", []),
    ("solve", "pendulum.json", []),
    ("simulate", "pendulum_simulate.json", []),
    ("residual-map", "pendulum_simulate.json", ["output=out/pendulum_residual"]),
    ("convergence-study", "pendulum_convergence.json", []),
    ("solve", "magnetic_wheel.json", []),
    ("compare-interpolation", "compare_interpolation.json", []),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true", help="15^3 wheel grid instead of 30^3")
    ap.add_argument("--only", nargs="*", help="run only configs whose file name contains one of these strings")
    args = ap.parse_args(argv)
    failures = 0
    for command, name, extra in RUNS:
        if args.only and not any(s in name for s in args.only):
            continue
        if "greece" in name and not (ROOT / "data" / "greece.pgm").exists():
            print(f"-- skipping {name}: data/greece.pgm not present")
            continue
        sets = list(extra)
        if args.quick and "wheel" in name:
            sets.append("grid=[15,15,15]")
        argv_run = [command, str(CONFIGS / name)] + [a for s in sets for a in ("--set", s)]
        print(f"== {command} {name} {' '.join(sets)}", flush=True)
        start = time.perf_counter()
        code = cli(argv_run)
        print(f"-- exit {code} after {time.perf_counter() - start:.1f} s\n", flush=True)
        failures += code != 0
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
