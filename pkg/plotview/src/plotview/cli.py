"""Command line entry point: CSV tables in, one figure file out."""

from __future__ import annotations

import argparse
import sys

from . import PlotError
from .figures import (
    census_gallery_figure,
    cutoffs_figure,
    ranks_figure,
    save_figure,
    surface_figure,
)
from .readers import pick_tables, select_combo

_NEEDED: dict[str, tuple[str, ...]] = {
    "cutoffs": ("cutoffs",),
    "ranks": ("ranks",),
    "surface": ("globals", "grid-combos"),
    "census-gallery": ("cutoffs", "verdicts", "census-combos"),
}


def _build(args: argparse.Namespace):
    tables = pick_tables(args.csv, _NEEDED[args.kind])
    if args.kind == "cutoffs":
        _, rows = select_combo(tables["cutoffs"], args.combo)
        return cutoffs_figure(rows, args.zoom_college)
    if args.kind == "ranks":
        _, rows = select_combo(tables["ranks"], args.combo)
        return ranks_figure(rows, args.group, args.pref)
    if args.kind == "surface":
        return surface_figure(tables["globals"], tables["grid-combos"])
    return census_gallery_figure(
        tables["cutoffs"], tables["verdicts"], tables["census-combos"]
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotview",
        description="Render figures from solver CSV outputs.",
    )
    parser.add_argument("--csv", nargs="+", required=True,
                        help="input CSV files, any order")
    parser.add_argument("--kind", required=True, choices=sorted(_NEEDED),
                        help="figure to draw")
    parser.add_argument("--out", required=True,
                        help="output image path (.svg or .png)")
    parser.add_argument("--combo", type=int, default=None,
                        help="combo id when the CSV holds several")
    parser.add_argument("--group", type=int, default=1,
                        help="group for the ranks figure")
    parser.add_argument("--pref", default=None,
                        help="preference list for the ranks figure")
    parser.add_argument("--zoom-college", type=int, default=None,
                        help="college for the cutoffs zoom panel")
    args = parser.parse_args(argv)
    try:
        fig = _build(args)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    save_figure(fig, args.out)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
