"""Sweep both groups' correlations on a grid and summarize E and L_12.

Produces the two-parameter efficiency and inequality surfaces for a
two-college market with one group stochastically dominating the other.

Usage: python scripts/run_grid.py [--out runs/grid]
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from admissions.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path, tol: float) -> int:
    cfg = ROOT / "configs" / "efficiency_grid.json"
    rc = cli_main(["grid", "--config", str(cfg), "--out", str(out),
                   "--tol", str(tol)])
    if rc != 0:
        return rc
    outer = {}
    with open(out / "combos.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            outer[row["combo_id"]] = float(row["theta_outer_value"])
    best = worst = None
    least = None
    with open(out / "globals.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            point = (outer[row["combo_id"]], float(row["theta_value"]))
            e, l12 = float(row["E"]), float(row["L_12"])
            if best is None or e > best[0]:
                best = (e, point)
            if worst is None or e < worst[0]:
                worst = (e, point)
            if least is None or l12 < least[0]:
                least = (l12, point)
    print(f"efficiency range: {worst[0]:.6f} at theta={worst[1]} "
          f"to {best[0]:.6f} at theta={best[1]}")
    print(f"inequality minimum: {least[0]:.6f} at theta={least[1]}")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "grid")
    ap.add_argument("--tol", type=float, default=1e-8)
    args = ap.parse_args(argv)
    return run(args.out, args.tol)


if __name__ == "__main__":
    sys.exit(main())
