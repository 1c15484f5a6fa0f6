"""Validate the continuum solver against finite deferred acceptance.

Usage: python scripts/run_oracle.py [--out runs/oracle] [--seed 0]
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
from collections import defaultdict
from pathlib import Path

from admissions.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path, seed: int, tol: float) -> int:
    cfg = ROOT / "configs" / "oracle.json"
    rc = cli_main(["oracle", "--config", str(cfg), "--out", str(out),
                   "--seed", str(seed), "--tol", str(tol)])
    if rc != 0:
        return rc
    devs: dict[int, list[float]] = defaultdict(list)
    bands: dict[int, float] = {}
    with open(out / "oracle.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            n = int(row["n_students"])
            devs[n].append(float(row["cutoff_dev"]))
            bands[n] = float(row["band"])
    print(f"{'N':>8} {'median dev':>11} {'max dev':>9} {'band 5/sqrt(N)':>15}")
    for n in sorted(devs):
        print(f"{n:>8} {statistics.median(devs[n]):>11.5f} "
              f"{max(devs[n]):>9.5f} {bands[n]:>15.5f}")
    sizes = sorted(devs)
    if len(sizes) >= 2:
        first, last = sizes[0], sizes[-1]
        ratio = statistics.median(devs[last]) / statistics.median(devs[first])
        print(f"median ratio {last}/{first}: {ratio:.3f} "
              f"(1/2 expected when N quadruples)")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "oracle")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-8)
    args = ap.parse_args(argv)
    return run(args.out, args.seed, args.tol)


if __name__ == "__main__":
    sys.exit(main())
