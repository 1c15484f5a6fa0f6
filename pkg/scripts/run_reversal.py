"""Sweep the cutoff-reversal market and report where each cutoff rises.

The market has one low-capacity pair of colleges and one large college;
as the second group's correlation approaches its upper end the large
college's cutoff rises even though every cutoff falls over the full range.

Usage: python scripts/run_reversal.py [--out runs/reversal]
"""

from __future__ import annotations

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

from admissions.cli import main as cli_main
from admissions.metrics import detect_nonmonotone_cutoffs

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path, tol: float) -> int:
    cfg = ROOT / "configs" / "reversal_sweep.json"
    rc = cli_main(["sweep", "--config", str(cfg), "--out", str(out),
                   "--tol", str(tol)])
    if rc != 0:
        return rc
    thetas: list[float] = []
    paths: dict[int, list[float]] = defaultdict(list)
    with open(out / "cutoffs.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            college = int(row["college"])
            if college == 1:
                thetas.append(float(row["theta_value"]))
            paths[college].append(float(row["cutoff"]))
    colleges = sorted(paths)
    sweep = [(t, [paths[c][k] for c in colleges]) for k, t in enumerate(thetas)]
    flags = {c: (iv, inc)
             for c, iv, inc in detect_nonmonotone_cutoffs(sweep)}
    print(f"{'college':>8} {'net change':>12} {'rising interval':>18} "
          f"{'max step':>10}")
    for idx, c in enumerate(colleges):
        net = paths[c][-1] - paths[c][0]
        if idx in flags:
            (lo, hi), inc = flags[idx]
            print(f"{c:>8} {net:>+12.6f} {f'[{lo:.2f}, {hi:.2f}]':>18} "
                  f"{inc:>10.2e}")
        else:
            print(f"{c:>8} {net:>+12.6f} {'monotone':>18}")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "reversal")
    ap.add_argument("--tol", type=float, default=1e-8)
    args = ap.parse_args(argv)
    return run(args.out, args.tol)


if __name__ == "__main__":
    sys.exit(main())
