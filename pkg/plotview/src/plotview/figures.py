"""Figure builders over parsed CSV rows; each returns a matplotlib Figure.

Rendering is configured for reproducibility: fixed figure geometry, the
Agg backend, a pinned SVG hash salt, and no date metadata, so identical
inputs yield byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import PlotError

matplotlib.rcParams["svg.hashsalt"] = "plotview"
matplotlib.rcParams["figure.dpi"] = 100

_CMAP = plt.get_cmap("viridis")


def _line_color(index: int, total: int) -> tuple[float, float, float, float]:
    # spread line colors over a monotone-luminance map, darkest first
    return _CMAP(0.1 + 0.75 * index / max(1, total - 1))


def _curves_by_college(
    rows: list[dict[str, str]],
) -> dict[int, tuple[list[float], list[float]]]:
    out: dict[int, tuple[list[float], list[float]]] = {}
    for row in rows:
        thetas, cutoffs = out.setdefault(int(row["college"]), ([], []))
        thetas.append(float(row["theta_value"]))
        cutoffs.append(float(row["cutoff"]))
    for college, (thetas, cutoffs) in out.items():
        order = sorted(range(len(thetas)), key=thetas.__getitem__)
        out[college] = ([thetas[i] for i in order], [cutoffs[i] for i in order])
    return out


def _default_zoom(curves: dict[int, tuple[list[float], list[float]]]) -> int:
    # zoom on the college with the largest upward step, ties to the last
    best = None
    for college, (_, path) in sorted(curves.items()):
        rise = max(
            (b - a for a, b in zip(path, path[1:])), default=-math.inf
        )
        if best is None or rise >= best[0]:
            best = (rise, college)
    return best[1]


def cutoffs_figure(
    rows: list[dict[str, str]], zoom_college: int | None = None
) -> plt.Figure:
    """All cutoff curves, plus a zoom panel tight around one college."""
    curves = _curves_by_college(rows)
    if zoom_college is None:
        zoom_college = _default_zoom(curves)
    elif zoom_college not in curves:
        raise PlotError(
            f"college {zoom_college} not present; available: "
            f"{', '.join(map(str, sorted(curves)))}"
        )
    fig, (left, right) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for idx, college in enumerate(sorted(curves)):
        thetas, path = curves[college]
        left.plot(thetas, path, label=f"$P^{{{college}}}$",
                  color=_line_color(idx, len(curves)))
    left.set_xlabel(r"$\theta$")
    left.set_ylabel("cutoff")
    left.legend(loc="best")
    left.set_title("all cutoffs")

    thetas, path = curves[zoom_college]
    right.plot(thetas, path, color="#b02a2a")
    lo, hi = min(path), max(path)
    pad = 0.08 * (hi - lo) if hi > lo else max(1e-6, abs(hi) * 1e-3)
    right.set_ylim(lo - pad, hi + pad)
    right.set_xlabel(r"$\theta$")
    right.set_title(f"$P^{{{zoom_college}}}$, zoomed")
    fig.tight_layout()
    return fig


def ranks_figure(
    rows: list[dict[str, str]], group: int, pref: str | None
) -> plt.Figure:
    """Top-k admission curves for one group and one preference list."""
    groups = sorted({int(r["group"]) for r in rows})
    if group not in groups:
        raise PlotError(
            f"group {group} not present; available: "
            f"{', '.join(map(str, groups))}"
        )
    mine = [r for r in rows if int(r["group"]) == group]
    prefs = sorted({r["pref_list"] for r in mine})
    if pref is None:
        pref = prefs[0]
    elif pref not in prefs:
        raise PlotError(
            f"preference list {pref} not present; available: "
            f"{', '.join(prefs)}"
        )
    mine = [r for r in mine if r["pref_list"] == pref]
    ks = sorted({int(r["k"]) for r in mine})
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    for idx, k in enumerate(ks):
        pts = sorted(
            (float(r["theta_value"]), float(r["R"]))
            for r in mine
            if int(r["k"]) == k
        )
        ax.plot([t for t, _ in pts], [v for _, v in pts],
                label=f"$R^{{{k}}}$", color=_line_color(idx, len(ks)))
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel("share admitted in top $k$")
    ax.set_title(f"group {group}, preferences {pref}")
    ax.legend(loc="best")
    fig.tight_layout()
    return fig


def _rectangular_grid(
    globals_rows: list[dict[str, str]], grid_rows: list[dict[str, str]]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, str, str]:
    outer = {int(r["combo_id"]): r["theta_outer_value"] for r in grid_rows}
    outer_group = grid_rows[0]["theta_outer_group"]
    per_combo: dict[int, list[tuple[str, float, float]]] = {}
    inner_group = None
    for row in globals_rows:
        cid = int(row["combo_id"])
        if cid not in outer:
            raise PlotError(
                f"combo {cid} has no outer theta; available: "
                f"{', '.join(map(str, sorted(outer)))}"
            )
        per_combo.setdefault(cid, []).append(
            (row["theta_value"], float(row["E"]), float(row["L_12"]))
        )
    signatures = {tuple(t for t, _, _ in pts) for pts in per_combo.values()}
    if len(signatures) != 1:
        raise PlotError("inner theta grids differ across combos; "
                        "a rectangular sweep is required")
    inner = [float(t) for t in next(iter(signatures))]
    xs = sorted(per_combo, key=lambda cid: float(outer[cid]))
    X = np.array([float(outer[cid]) for cid in xs])
    Y = np.array(inner)
    E = np.array([[e for _, e, _ in per_combo[cid]] for cid in xs]).T
    L = np.array([[l for _, _, l in per_combo[cid]] for cid in xs]).T
    return X, Y, E, L, outer_group, inner_group or ""


def surface_figure(
    globals_rows: list[dict[str, str]], grid_rows: list[dict[str, str]]
) -> plt.Figure:
    """Efficiency surface with level lines, next to the inequality surface."""
    X, Y, E, L, outer_group, _ = _rectangular_grid(globals_rows, grid_rows)
    XX, YY = np.meshgrid(X, Y)
    fig = plt.figure(figsize=(10.0, 4.2))
    for pos, (Z, name) in enumerate(((E, "efficiency $E$"),
                                     (L, "inequality $L_{12}$"))):
        ax = fig.add_subplot(1, 2, pos + 1, projection="3d")
        ax.plot_surface(XX, YY, Z, cmap=_CMAP, linewidth=0, alpha=0.9)
        if pos == 0:
            ax.contour(XX, YY, Z, levels=8, colors="black", linewidths=0.6)
            ax.contour(XX, YY, Z, levels=8, colors="black", linewidths=0.5,
                       zdir="z", offset=float(Z.min()))
        ax.set_xlabel(f"group {outer_group} " + r"$\theta$")
        ax.set_ylabel(r"other group $\theta$")
        ax.set_title(name)
    fig.tight_layout()
    return fig


def census_gallery_figure(
    cutoff_rows: list[dict[str, str]],
    verdict_rows: list[dict[str, str]],
    combo_rows: list[dict[str, str]],
) -> plt.Figure:
    """Small multiples of every tallied non-monotone census combination."""
    key = "counted" if "counted" in verdict_rows[0] else "nonmonotone"
    flagged = {
        int(r["combo_id"]): r for r in verdict_rows if r[key] == "true"
    }
    if not flagged:
        raise PlotError("no non-monotone combinations to draw")
    meta = {int(r["combo_id"]): r for r in combo_rows}
    by_combo: dict[int, list[dict[str, str]]] = {}
    for row in cutoff_rows:
        by_combo.setdefault(int(row["combo_id"]), []).append(row)
    missing = sorted(set(flagged) - set(by_combo))
    if missing:
        raise PlotError(
            "cutoff rows absent for flagged combos: "
            f"{', '.join(map(str, missing))}"
        )
    ids = sorted(flagged)
    ncols = min(4, len(ids))
    nrows = math.ceil(len(ids) / ncols)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.0 * ncols, 2.3 * nrows), squeeze=False
    )
    for slot, cid in enumerate(ids):
        ax = axes[slot // ncols][slot % ncols]
        curves = _curves_by_college(by_combo[cid])
        risers = {
            int(c) for c in flagged[cid]["colleges"].split(";") if c
        }
        for college in sorted(curves):
            thetas, path = curves[college]
            if college in risers:
                ax.plot(thetas, path, color="#b02a2a", linewidth=1.4,
                        label=f"$P^{{{college}}}$")
            else:
                ax.plot(thetas, path, color="#999999", linewidth=0.9)
        info = meta.get(cid)
        title = f"combo {cid}"
        if info is not None:
            title += (f"  {info['capacity_split']}  "
                      f"t1={float(info['theta_1']):g} "
                      f"b={info['beta_profile']}")
        ax.set_title(title, fontsize=7)
        ax.tick_params(labelsize=6)
        ax.legend(fontsize=6, loc="best")
    for slot in range(len(ids), nrows * ncols):
        axes[slot // ncols][slot % ncols].set_axis_off()
    fig.tight_layout()
    return fig


def save_figure(fig: plt.Figure, out: str | Path) -> None:
    """Write the figure; SVG output drops the date stamp for stable bytes."""
    out = Path(out)
    fmt = (out.suffix.lstrip(".") or "svg").lower()
    metadata = {"Date": None} if fmt == "svg" else None
    try:
        fig.savefig(out, format=fmt, metadata=metadata)
    finally:
        plt.close(fig)
