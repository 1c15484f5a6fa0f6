"""Solve the symmetric two-college benchmark and compare with closed forms.

Usage: python scripts/run_benchmark.py [--out runs/benchmark]
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from admissions.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path, tol: float) -> int:
    cfg = ROOT / "configs" / "benchmark.json"
    rc = cli_main(["solve", "--config", str(cfg), "--out", str(out),
                   "--tol", str(tol)])
    if rc != 0:
        return rc
    with open(out / "cutoffs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    expected = math.sqrt(0.5)
    print(f"{'college':>8} {'cutoff':>16} {'closed form':>16} {'error':>10}")
    for row in rows:
        got = float(row["cutoff"])
        print(f"{row['college']:>8} {got:>16.12f} {expected:>16.12f} "
              f"{abs(got - expected):>10.2e}")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "benchmark")
    ap.add_argument("--tol", type=float, default=1e-8)
    args = ap.parse_args(argv)
    return run(args.out, args.tol)


if __name__ == "__main__":
    sys.exit(main())
