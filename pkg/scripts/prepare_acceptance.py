#!/usr/bin/env python3
"""Pre-build the evolution-scale artifacts the acceptance suite verifies.

Runs the desk-scale evolutionary runs (homing x3, dispersion x3,
clustering, monitoring) with post-evaluation and stores the archives under
results/acceptance/.  The whole pipeline is seed-deterministic, so
regenerating on another machine reproduces the shipped artifacts.

Usage:
    python scripts/prepare_acceptance.py [--jobs 2] [--only homing_s0 ...]
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import acceptance_support as acc  # noqa: E402


def _build(name: str, inner_workers: int) -> str:
    t0 = time.perf_counter()
    archive = acc.ensure_run(name, workers=inner_workers)
    best = archive.best_record()
    return (f"{name}: gen {best.generation} posteval "
            f"{best.posteval_mean if best.posteval_mean is not None else float('nan'):.4f} "
            f"({time.perf_counter() - t0:.0f}s)")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--jobs", type=int, default=2,
                        help="process parallelism across runs")
    parser.add_argument("--only", nargs="*", default=None,
                        help="subset of run names (default: all)")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s: %(message)s")

    names = list(acc.run_recipes())
    if args.only:
        unknown = set(args.only) - set(names)
        if unknown:
            parser.error(f"unknown run names: {sorted(unknown)}")
        names = args.only

    # many small runs first (parallel across runs), heavy single runs last
    # (parallel inside the run)
    light = [n for n in names if n.startswith(("homing", "dispersion"))]
    heavy = [n for n in names if n not in light]

    t0 = time.perf_counter()
    if light:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for line in pool.map(_build, light, [1] * len(light)):
                print(line, flush=True)
    for name in heavy:
        print(_build(name, args.jobs), flush=True)
    print(f"all artifacts ready in {time.perf_counter() - t0:.0f}s "
          f"-> {acc.RESULTS_DIR}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
