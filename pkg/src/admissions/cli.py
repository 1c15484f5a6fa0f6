"""Command-line front door: market solves, sweeps, and experiment grids to CSV.

Every command reads one JSON config, writes CSV files plus a manifest into the
output directory, and exits 0 on success, 2 on validation errors, 3 on solver
failure (census runs record per-combination failures instead of aborting).
Re-running a command with the same config and seed reproduces the CSV bytes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import Iterable, Sequence

from . import __version__
from .config import RunConfig, load_config
from .copula import make_family
from .errors import (
    CapabilityError,
    ConfigError,
    ConstructionError,
    DomainError,
    InputError,
    SolverError,
)
from .finite_oracle import oracle_compare
from .latent import latent_to_market
from .metrics import (
    NONMONOTONE_SLACK,
    SweepRow,
    compute_metrics,
    detect_nonmonotone_cutoffs,
    metric_sweep,
    trace_iso_efficiency,
)
from .scores import GroupScoreModel, Uniform
from .solver import MarketSpec, preference_lists, solve_market_clearing
from .tiebreak import tiebreak_market

CUTOFF_HEADER = ("combo_id", "theta_target_group", "theta_value",
                 "college", "cutoff", "full_flag")
RANK_HEADER = ("combo_id", "theta_value", "group", "pref_list", "k", "R")
GLOBAL_HEADER = ("combo_id", "theta_value", "E", "L_12")
CONTOUR_HEADER = ("combo_id", "theta_value", "theta_other", "gap", "E", "L_12")
ORACLE_HEADER = ("n_students", "seed", "band", "cutoff_dev", "efficiency_dev",
                 "unmatched_dev", "rank_dev", "flags")
LATENT_HEADER = ("group", "quality_var", "noise_var", "theta")
COMBO_HEADER = ("combo_id", "gamma_1", "gamma_2", "total_capacity",
                "capacity_split", "theta_1", "beta_profile")
GRID_COMBO_HEADER = ("combo_id", "theta_outer_group", "theta_outer_value")
VERDICT_HEADER = ("combo_id", "status", "nonmonotone", "colleges",
                  "max_increment", "rank2_decreasing", "counted")

# census tallies only count combos whose largest cutoff rise clears this
# floor; shallower rises are recorded in verdicts.csv but treated as noise
# at the tally level (the detector itself keeps its much tighter slack)
CENSUS_INCREMENT_FLOOR = 1e-4


def _fmt(x: float) -> str:
    return "%.12g" % float(x)


def _flag(b: bool) -> str:
    return "true" if b else "false"


def _pref(sigma: Sequence[int]) -> str:
    return "".join(str(i + 1) for i in sigma)


def _l12(report) -> float:
    ineq = report.inequality
    return ineq[0][1] if len(ineq) > 1 else 0.0


def _cutoff_rows(combo_id: int, target_group: int,
                 rows: Sequence[SweepRow]) -> Iterable[list]:
    for row in rows:
        theta = _fmt(row.theta)
        for i, (p, f) in enumerate(zip(row.cutoffs.P, row.cutoffs.full)):
            yield [combo_id, target_group, theta, i + 1, _fmt(p), _flag(f)]


def _rank_rows(combo_id: int, rows: Sequence[SweepRow],
               m: int, d: int) -> Iterable[list]:
    perms = preference_lists(m)
    for row in rows:
        theta = _fmt(row.theta)
        for j in range(d):
            for s, sigma in enumerate(perms):
                for k in range(1, m + 1):
                    yield [combo_id, theta, j + 1, _pref(sigma), k,
                           _fmt(row.report.ranks[j][s][k - 1])]


def _global_rows(combo_id: int, rows: Sequence[SweepRow]) -> Iterable[list]:
    for row in rows:
        yield [combo_id, _fmt(row.theta), _fmt(row.report.efficiency),
               _fmt(_l12(row.report))]


class _CsvFile:
    """A CSV file with a fixed header, written incrementally."""

    def __init__(self, outdir: str, name: str, header: Sequence[str]):
        self.path = os.path.join(outdir, name)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(header)

    def write(self, rows: Iterable[Sequence]) -> None:
        self._writer.writerows(rows)

    def close(self) -> None:
        self._fh.close()


def _write_standard_csvs(outdir: str, blocks: Sequence[tuple[int, int, Sequence[SweepRow]]],
                         m: int, d: int) -> None:
    """cutoffs/ranks/globals files from (combo_id, target_group, rows) blocks."""
    cut = _CsvFile(outdir, "cutoffs.csv", CUTOFF_HEADER)
    rnk = _CsvFile(outdir, "ranks.csv", RANK_HEADER)
    glb = _CsvFile(outdir, "globals.csv", GLOBAL_HEADER)
    try:
        for combo_id, target_group, rows in blocks:
            cut.write(_cutoff_rows(combo_id, target_group, rows))
            rnk.write(_rank_rows(combo_id, rows, m, d))
            glb.write(_global_rows(combo_id, rows))
    finally:
        cut.close()
        rnk.close()
        glb.close()


def _write_manifest(cfg: RunConfig, raw: bytes, extra: dict | None = None) -> None:
    manifest = {
        "tool": "admissions",
        "version": __version__,
        "command": cfg.command,
        "config_sha256": hashlib.sha256(raw).hexdigest(),
        "seed": cfg.seed,
        "jobs": cfg.jobs,
        "tolerances": {"solver": cfg.tol},
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(cfg.out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _solve_single(spec: MarketSpec, tol: float) -> SweepRow:
    cv = solve_market_clearing(spec, tol=tol)
    return SweepRow(0.0, cv, compute_metrics(spec, cv))


def _print_cutoffs(row: SweepRow) -> None:
    parts = ", ".join(
        f"P{i + 1}={p:.6g}{'' if f else ' (not full)'}"
        for i, (p, f) in enumerate(zip(row.cutoffs.P, row.cutoffs.full))
    )
    print(f"cutoffs: {parts}")
    print(f"efficiency E={row.report.efficiency:.6g}, residual="
          f"{row.cutoffs.residual:.3g}")


def _run_solve(cfg: RunConfig, raw: bytes) -> None:
    spec = cfg.market
    row = _solve_single(spec, cfg.tol)
    _write_standard_csvs(cfg.out, [(1, 0, [row])], spec.m, spec.d)
    _write_manifest(cfg, raw)
    _print_cutoffs(row)


def _run_sweep(cfg: RunConfig, raw: bytes) -> None:
    spec, sec = cfg.market, cfg.sweep
    rows = metric_sweep(spec, sec.group, sec.grid, tol=cfg.tol)
    _write_standard_csvs(cfg.out, [(1, sec.group + 1, rows)], spec.m, spec.d)
    _write_manifest(cfg, raw)
    flagged = detect_nonmonotone_cutoffs(rows)
    print(f"swept group {sec.group + 1} over {len(rows)} nodes; "
          f"non-monotone cutoff intervals: {len(flagged)}")


def _run_grid(cfg: RunConfig, raw: bytes) -> None:
    spec, sec = cfg.market, cfg.grid
    blocks = []
    combo_rows = []
    for combo_id, theta_outer in enumerate(sec.outer_grid, start=1):
        outer_spec = spec.with_theta(sec.outer_group, theta_outer)
        rows = metric_sweep(outer_spec, sec.inner_group, sec.inner_grid,
                            tol=cfg.tol)
        blocks.append((combo_id, sec.inner_group + 1, rows))
        combo_rows.append([combo_id, sec.outer_group + 1, _fmt(theta_outer)])
    _write_standard_csvs(cfg.out, blocks, spec.m, spec.d)
    combos = _CsvFile(cfg.out, "combos.csv", GRID_COMBO_HEADER)
    combos.write(combo_rows)
    combos.close()
    _write_manifest(cfg, raw)
    print(f"solved {len(sec.outer_grid)}x{len(sec.inner_grid)} theta lattice")


def _run_contour(cfg: RunConfig, raw: bytes) -> None:
    spec, sec = cfg.market, cfg.contour
    nodes = trace_iso_efficiency(spec, sec.groups, sec.target, sec.grid)
    out = _CsvFile(cfg.out, "contour.csv", CONTOUR_HEADER)
    for node in nodes:
        if node.gap:
            out.write([[1, _fmt(node.theta), "nan", "true", "nan", "nan"]])
        else:
            out.write([[1, _fmt(node.theta), _fmt(node.theta_other), "false",
                        _fmt(node.report.efficiency), _fmt(_l12(node.report))]])
    out.close()
    _write_manifest(cfg, raw)
    gaps = sum(1 for n in nodes if n.gap)
    print(f"traced {len(nodes)} contour nodes at E={sec.target:g} ({gaps} gaps)")


def _run_tiebreak(cfg: RunConfig, raw: bytes) -> None:
    sec = cfg.tiebreak
    spec = tiebreak_market(sec.specs, sec.shell)
    if sec.sweep is not None:
        rows = metric_sweep(spec, sec.sweep.group, sec.sweep.grid, tol=cfg.tol)
        blocks = [(1, sec.sweep.group + 1, rows)]
    else:
        blocks = [(1, 0, [_solve_single(spec, cfg.tol)])]
    _write_standard_csvs(cfg.out, blocks, spec.m, spec.d)
    _write_manifest(cfg, raw)
    print(f"tie-break market with {spec.d} group(s) solved "
          f"({len(blocks[0][2])} node(s))")


def _run_latent(cfg: RunConfig, raw: bytes) -> None:
    sec = cfg.latent
    spec = latent_to_market(sec.noise, sec.shell, sec.colleges)
    row = _solve_single(spec, cfg.tol)
    _write_standard_csvs(cfg.out, [(1, 0, [row])], spec.m, spec.d)
    table = _CsvFile(cfg.out, "latent.csv", LATENT_HEADER)
    for j in range(spec.d):
        table.write([[j + 1, _fmt(sec.noise.quality_var),
                      _fmt(sec.noise.noise_vars[j]),
                      _fmt(sec.noise.signal_share(j))]])
    table.close()
    _write_manifest(cfg, raw)
    _print_cutoffs(row)


def _oracle_market(cfg: RunConfig) -> MarketSpec:
    if cfg.market is not None:
        return cfg.market
    if cfg.tiebreak is not None:
        return tiebreak_market(cfg.tiebreak.specs, cfg.tiebreak.shell)
    return latent_to_market(cfg.latent.noise, cfg.latent.shell,
                            cfg.latent.colleges)


def _run_oracle(cfg: RunConfig, raw: bytes) -> None:
    spec = _oracle_market(cfg)
    sec = cfg.oracle
    seeds = tuple(s + cfg.seed for s in sec.seeds)
    out = _CsvFile(cfg.out, "oracle.csv", ORACLE_HEADER)
    medians = []
    for n_students in sec.sizes:
        report = oracle_compare(spec, n_students, seeds, tol=cfg.tol)
        for row in report.rows:
            out.write([[n_students, row.seed, _fmt(report.band),
                        _fmt(row.cutoff_deviation),
                        _fmt(row.efficiency_deviation),
                        _fmt(row.unmatched_deviation),
                        _fmt(row.rank_deviation),
                        ";".join(row.flagged)]])
        medians.append(statistics.median(
            r.cutoff_deviation for r in report.rows))
    out.close()
    _write_manifest(cfg, raw)
    for n_students, med in zip(sec.sizes, medians):
        print(f"N={n_students}: median cutoff deviation {med:.6g} "
              f"(band {5.0 / math.sqrt(n_students):.6g})")


# ---------------------------------------------------------------------------
# Census: the full comparative-statics parameter grids
# ---------------------------------------------------------------------------

_F = Fraction

# preference profiles over the m! lexicographic preference lists
_BETA3 = {
    "I": (_F(1, 6),) * 6,
    "II": (_F(1, 32), _F(1, 8), _F(1, 32), _F(1, 4), _F(1, 16), _F(1, 2)),
    "III": (_F(1, 2), _F(1, 16), _F(1, 4), _F(1, 32), _F(1, 8), _F(1, 32)),
}
_BETA4 = {"I": (_F(1, 24),) * 24}

_CENSUS3 = {
    "gammas": ((_F(1, 10), _F(9, 10)), (_F(3, 10), _F(7, 10)),
               (_F(1, 2), _F(1, 2))),
    "totals": (_F(1, 3), _F(1, 2), _F(2, 3)),
    "splits": (
        ("10:10:80", (_F(1, 10), _F(1, 10), _F(8, 10))),
        ("33.3:33.3:33.3", (_F(1, 3), _F(1, 3), _F(1, 3))),
        ("10:45:45", (_F(1, 10), _F(9, 20), _F(9, 20))),
    ),
    "theta1": (_F(0), _F(1, 3), _F(2, 3), _F(99, 100)),
    "betas": ("I", "II", "III"),
}

_CENSUS4 = {
    "gammas": ((_F(1, 10), _F(9, 10)), (_F(1, 2), _F(1, 2))),
    "totals": (_F(1, 3), _F(2, 3), _F(9, 10)),
    "splits": (
        ("10:20:30:40", (_F(1, 10), _F(2, 10), _F(3, 10), _F(4, 10))),
        ("6.25:12.5:18.75:62.5", (_F(1, 16), _F(2, 16), _F(3, 16), _F(10, 16))),
    ),
    "theta1": (_F(0), _F(1, 2), _F(99, 100)),
    "betas": ("I",),
}

# the rank path inspected for decreases among flagged combinations
_CENSUS_SIGMA = {3: (2, 0, 1), 4: (3, 2, 1, 0)}


def census_combos(m: int) -> list[dict]:
    """The full parameter grid for the m-college census, in combo_id order."""
    table = _CENSUS3 if m == 3 else _CENSUS4
    betas = _BETA3 if m == 3 else _BETA4
    combos = []
    combo_id = 0
    for gammas in table["gammas"]:
        for total in table["totals"]:
            for split_label, split in table["splits"]:
                for theta1 in table["theta1"]:
                    for beta_label in table["betas"]:
                        combo_id += 1
                        combos.append({
                            "combo_id": combo_id,
                            "m": m,
                            "gammas": tuple(float(g) for g in gammas),
                            "alpha": tuple(float(total * s) for s in split),
                            "beta": tuple(float(b) for b in betas[beta_label]),
                            "theta1": float(theta1),
                            "total": float(total),
                            "split_label": split_label,
                            "beta_label": beta_label,
                        })
    return combos


def _census_spec(combo: dict) -> MarketSpec:
    m = combo["m"]
    marginals = tuple(Uniform(0.0, 1.0) for _ in range(m))
    family = make_family("gaussian-equicorrelated", m)
    models = (
        GroupScoreModel(marginals, family, combo["theta1"]),
        GroupScoreModel(marginals, family, 0.0),
    )
    return MarketSpec(combo["alpha"], combo["gammas"],
                      (combo["beta"], combo["beta"]), models)


def _census_worker(task: tuple[dict, tuple[float, ...], float]) -> dict:
    """One combination: sweep group 2's theta and pre-format the CSV rows."""
    combo, grid, tol = task
    cid, m = combo["combo_id"], combo["m"]
    spec = _census_spec(combo)
    try:
        rows = metric_sweep(spec, 1, grid, tol=tol)
    except SolverError as exc:
        status = f"solver-failure at theta={exc.theta:.6g}: residual {exc.residual:.3e}"
        return {"combo_id": cid, "status": status, "cutoffs": [], "ranks": [],
                "globals": [], "flags": [], "max_increment": 0.0,
                "rank2_decreasing": False}
    flags = detect_nonmonotone_cutoffs(rows)
    sigma = _CENSUS_SIGMA[m]
    path = [row.report.rank(0, sigma, 2) for row in rows]
    rank2_dec = any(b - a < -NONMONOTONE_SLACK for a, b in zip(path, path[1:]))
    return {
        "combo_id": cid,
        "status": "ok",
        "cutoffs": list(_cutoff_rows(cid, 2, rows)),
        "ranks": list(_rank_rows(cid, rows, m, spec.d)),
        "globals": list(_global_rows(cid, rows)),
        "flags": [(college, interval, inc) for college, interval, inc in flags],
        "max_increment": max((inc for _, _, inc in flags), default=0.0),
        "rank2_decreasing": rank2_dec,
    }


def run_census(cfg: RunConfig, raw: bytes) -> dict:
    """The full census grid; failures are recorded per combination."""
    sec = cfg.census
    combos = census_combos(sec.colleges)
    if sec.subset is not None:
        wanted = set(sec.subset)
        unknown = wanted - {c["combo_id"] for c in combos}
        if unknown:
            raise ConfigError(
                f"census.subset: unknown combo ids {sorted(unknown)}"
            )
        combos = [c for c in combos if c["combo_id"] in wanted]
    step = 0.99 / (sec.theta_nodes - 1)
    grid = tuple(step * k for k in range(sec.theta_nodes - 1)) + (0.99,)
    tasks = [(combo, grid, cfg.tol) for combo in combos]

    cut = _CsvFile(cfg.out, "cutoffs.csv", CUTOFF_HEADER)
    rnk = _CsvFile(cfg.out, "ranks.csv", RANK_HEADER)
    glb = _CsvFile(cfg.out, "globals.csv", GLOBAL_HEADER)
    vrd = _CsvFile(cfg.out, "verdicts.csv", VERDICT_HEADER)
    detected: list[int] = []
    nonmono: list[int] = []
    rank2: list[int] = []
    failures: list[dict] = []

    def collect(res: dict) -> None:
        # single collector: results arrive in combo_id order, thetas ascending
        cut.write(res["cutoffs"])
        rnk.write(res["ranks"])
        glb.write(res["globals"])
        flagged = bool(res["flags"])
        counted = flagged and res["max_increment"] > CENSUS_INCREMENT_FLOOR
        if res["status"] != "ok":
            failures.append({"combo_id": res["combo_id"],
                             "status": res["status"]})
        else:
            if flagged:
                detected.append(res["combo_id"])
            if counted:
                nonmono.append(res["combo_id"])
                if res["rank2_decreasing"]:
                    rank2.append(res["combo_id"])
        colleges = ";".join(str(c + 1) for c, _, _ in res["flags"])
        vrd.write([[res["combo_id"], res["status"], _flag(flagged),
                    colleges, _fmt(res["max_increment"]),
                    _flag(res["rank2_decreasing"]), _flag(counted)]])

    try:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                for res in pool.map(_census_worker, tasks, chunksize=4):
                    collect(res)
        else:
            for res in map(_census_worker, tasks):
                collect(res)
    finally:
        cut.close()
        rnk.close()
        glb.close()
        vrd.close()

    combo_table = _CsvFile(cfg.out, "combos.csv", COMBO_HEADER)
    for combo in combos:
        combo_table.write([[combo["combo_id"], _fmt(combo["gammas"][0]),
                            _fmt(combo["gammas"][1]), _fmt(combo["total"]),
                            combo["split_label"], _fmt(combo["theta1"]),
                            combo["beta_label"]]])
    combo_table.close()

    summary = {
        "colleges": sec.colleges,
        "combos": len(combos),
        "theta_nodes": sec.theta_nodes,
        "solved": len(combos) - len(failures),
        "failures": failures,
        "increment_floor": CENSUS_INCREMENT_FLOOR,
        "detected_count": len(detected),
        "nonmonotone_count": len(nonmono),
        "nonmonotone_combos": nonmono,
        "rank2_decreasing_count": len(rank2),
        "rank2_decreasing_combos": rank2,
        "rank_sigma": _pref(_CENSUS_SIGMA[sec.colleges]),
    }
    with open(os.path.join(cfg.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg, raw)
    print(f"census: {len(combos)} combinations, "
          f"{summary['nonmonotone_count']} with non-monotone cutoffs, "
          f"{summary['rank2_decreasing_count']} with a decreasing top-2 rank, "
          f"{len(failures)} solver failures")
    return summary


_HANDLERS = {
    "solve": _run_solve,
    "sweep": _run_sweep,
    "grid": _run_grid,
    "contour": _run_contour,
    "tiebreak": _run_tiebreak,
    "latent": _run_latent,
    "oracle": _run_oracle,
    "census": run_census,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="admissions",
        description="Solve continuum admissions markets and run the "
                    "correlation comparative-statics experiments.",
    )
    parser.add_argument("command", nargs="?", default=None,
                        help="optional; must match the config's command")
    parser.add_argument("--config", required=True, help="path to the run JSON")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="RNG seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel workers for the census")
    parser.add_argument("--tol", type=float, default=None,
                        help="market-clearing residual tolerance")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.seed is not None and not (0 <= args.seed < 2 ** 64):
            raise ConfigError("--seed must fit an unsigned 64-bit integer")
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if args.tol is not None and not (args.tol > 0.0):
            raise ConfigError("--tol must be positive")
        cfg, raw = load_config(args.config)
        cfg = cfg.with_overrides(out=args.out, seed=args.seed,
                                 jobs=args.jobs, tol=args.tol)
        if args.command is not None and args.command != cfg.command:
            raise ConfigError(
                f"command {args.command!r} does not match the config's "
                f"command {cfg.command!r}"
            )
        if cfg.out is None:
            raise ConfigError(
                "an output directory is required ('out' in the config or --out)"
            )
        os.makedirs(cfg.out, exist_ok=True)
        _HANDLERS[cfg.command](cfg, raw)
    except (ConfigError, InputError, ConstructionError, DomainError,
            CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
