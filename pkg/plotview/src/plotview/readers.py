"""Strict CSV ingestion: schema detection by column names, explicit errors."""

from __future__ import annotations

import csv
from pathlib import Path

from . import PlotError

# each schema is identified by the full set of columns a figure needs;
# files may carry extra columns (schemas here are the consumed subset)
SCHEMAS: dict[str, tuple[str, ...]] = {
    "cutoffs": ("combo_id", "theta_value", "college", "cutoff"),
    "ranks": ("combo_id", "theta_value", "group", "pref_list", "k", "R"),
    "globals": ("combo_id", "theta_value", "E", "L_12"),
    "grid-combos": ("combo_id", "theta_outer_group", "theta_outer_value"),
    "verdicts": ("combo_id", "status", "nonmonotone", "colleges"),
    "census-combos": ("combo_id", "capacity_split", "theta_1", "beta_profile"),
}


def read_table(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    """Header and data rows; a readable file with rows is mandatory."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = list(reader.fieldnames or [])
            rows = list(reader)
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}")
    if not header:
        raise PlotError(f"{path}: empty file, no header row")
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return header, rows


def match_schema(header: list[str], schema: str) -> bool:
    return all(col in header for col in SCHEMAS[schema])


def pick_tables(
    paths: list[str], needed: tuple[str, ...]
) -> dict[str, list[dict[str, str]]]:
    """Assign one input file to each needed schema, or say what is absent.

    Every file is read up front, so no figure is drawn from a half-valid
    request.  A file may satisfy at most one schema (first match wins in
    the declared order).
    """
    loaded = [(p, *read_table(p)) for p in paths]
    out: dict[str, list[dict[str, str]]] = {}
    used: set[int] = set()
    for schema in needed:
        found = None
        for idx, (path, header, rows) in enumerate(loaded):
            if idx not in used and match_schema(header, schema):
                found = idx
                out[schema] = rows
                break
        if found is None:
            details = "; ".join(
                f"{path} lacks [{', '.join(c for c in SCHEMAS[schema] if c not in header)}]"
                for path, header, _ in loaded
            )
            raise PlotError(
                f"no input provides the {schema} columns "
                f"[{', '.join(SCHEMAS[schema])}]: {details}"
            )
        used.add(found)
    return out


def combo_ids(rows: list[dict[str, str]]) -> list[int]:
    seen: dict[int, None] = {}
    for row in rows:
        seen.setdefault(int(row["combo_id"]))
    return list(seen)


def select_combo(rows: list[dict[str, str]], combo: int | None) -> tuple[int, list[dict[str, str]]]:
    """Rows for one combo; an explicit id is required when several exist."""
    ids = combo_ids(rows)
    if combo is None:
        if len(ids) > 1:
            raise PlotError(
                f"several combos present ({', '.join(map(str, ids))}); "
                "choose one with --combo"
            )
        combo = ids[0]
    if combo not in ids:
        raise PlotError(
            f"combo {combo} not present; available: {', '.join(map(str, ids))}"
        )
    return combo, [r for r in rows if int(r["combo_id"]) == combo]
