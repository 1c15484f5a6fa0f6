"""Welfare and inequality metrics over solved cutoffs.

Rank attainment, unmatched rates, first-choice efficiency, and pairwise
group inequality all reduce to below-cutoff probabilities on prefix
subsets of the preference lists, so one batched copula evaluation per
group covers the whole report.  Sweeps and iso-efficiency contours wrap
the market-clearing solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .copula import ParamDomain
from .errors import DomainError, InputError
from .solver import CutoffVector, MarketSpec, preference_lists, solve_market_clearing

ISO_E_TOL = 1e-6
NONMONOTONE_SLACK = 1e-7


@dataclass(frozen=True)
class MetricsReport:
    """Per-group rank attainment plus market-level efficiency and inequality.

    ranks[j][s][k-1] is the probability that a group-j student with the
    s-th preference list is admitted somewhere in their top k choices;
    unmatched[j] is the probability of clearing no cutoff at all.
    """

    ranks: tuple[tuple[tuple[float, ...], ...], ...]
    unmatched: tuple[float, ...]
    efficiency: float
    inequality: tuple[tuple[float, ...], ...]

    def rank(self, group: int, sigma: Sequence[int], k: int) -> float:
        m = len(self.ranks[group][0])
        perms = preference_lists(m)
        key = tuple(sigma)
        if key not in perms:
            raise InputError(f"not a preference list over 0..{m - 1}: {sigma}")
        if not 1 <= k <= m:
            raise InputError(f"rank k must lie in 1..{m}")
        return self.ranks[group][perms.index(key)][k - 1]


def compute_metrics(spec: MarketSpec, P) -> MetricsReport:
    cutoffs = P.cutoffs if isinstance(P, CutoffVector) else np.asarray(P, dtype=float)
    m = spec.m
    perms = preference_lists(m)
    subsets: list[tuple[int, ...]] = []
    index: dict[frozenset, int] = {}

    def subset_index(s: frozenset) -> int:
        if s not in index:
            index[s] = len(subsets)
            subsets.append(tuple(sorted(s)))
        return index[s]

    prefix = [
        [subset_index(frozenset(sigma[:k])) for k in range(1, m + 1)]
        for sigma in perms
    ]
    full_idx = subset_index(frozenset(range(m)))

    ranks = []
    unmatched = []
    for model in spec.models:
        B = model.below_cutoff_batch(subsets, cutoffs)
        ranks.append(
            tuple(
                tuple(float(1.0 - B[prefix[s][k]]) for k in range(m))
                for s in range(len(perms))
            )
        )
        unmatched.append(float(B[full_idx]))

    efficiency = sum(
        gamma * sum(b * row[0] for b, row in zip(beta, group_ranks))
        for gamma, beta, group_ranks in zip(spec.gammas, spec.betas, ranks)
    )
    inequality = tuple(
        tuple(abs(unmatched[j] - unmatched[l]) for l in range(spec.d))
        for j in range(spec.d)
    )
    return MetricsReport(
        ranks=tuple(ranks),
        unmatched=tuple(unmatched),
        efficiency=float(efficiency),
        inequality=inequality,
    )


@dataclass(frozen=True)
class SweepRow:
    theta: float
    cutoffs: CutoffVector
    report: MetricsReport


def metric_sweep(spec: MarketSpec, group: int, grid,
                 tol: float = 1e-8) -> list[SweepRow]:
    """Solve and score the market along a theta grid for one group."""
    from .solver import solve_theta_sweep

    grid = np.asarray(grid, dtype=float)
    solved = solve_theta_sweep(spec, group, grid, tol=tol)
    return [
        SweepRow(float(t), cv, compute_metrics(spec.with_theta(group, float(t)), cv))
        for t, cv in zip(grid, solved)
    ]


@dataclass(frozen=True)
class IsoNode:
    """One traced contour node; theta_other is None where no bracket exists."""

    theta: float
    theta_other: float | None
    report: MetricsReport | None

    @property
    def gap(self) -> bool:
        return self.theta_other is None


def _search_window(domain: ParamDomain) -> tuple[float, float]:
    lo = domain.lo if np.isfinite(domain.lo) else -50.0
    hi = domain.hi if np.isfinite(domain.hi) else 50.0
    span = hi - lo
    if domain.lo_open:
        lo += 1e-9 * max(1.0, span)
    if domain.hi_open:
        hi -= 1e-9 * max(1.0, span)
    return lo, hi


def trace_iso_efficiency(
    spec: MarketSpec,
    groups: tuple[int, int],
    target: float,
    grid,
    *,
    tol: float = ISO_E_TOL,
) -> list[IsoNode]:
    """Per grid node, the other group's theta holding efficiency at target.

    Efficiency is monotone in the companion parameter on the supported
    configurations, so each node is a guarded bisection; nodes whose
    bracket misses the target are reported as gaps, not extrapolated.
    """
    j, l = groups
    if j == l or not (0 <= j < spec.d and 0 <= l < spec.d):
        raise InputError("need two distinct group indices inside the market")
    grid = np.asarray(grid, dtype=float)
    lo0, hi0 = _search_window(spec.models[l].family.domain)

    def efficiency_at(node_spec: MarketSpec, theta_l: float, x0) -> tuple[float, MetricsReport, CutoffVector]:
        if node_spec.models[l].family.domain.exclude_zero and theta_l == 0.0:
            theta_l = 1e-12
        probe = node_spec.with_theta(l, theta_l)
        cv = solve_market_clearing(probe, x0=x0)
        rep = compute_metrics(probe, cv)
        return rep.efficiency, rep, cv

    out: list[IsoNode] = []
    warm: CutoffVector | None = None
    for theta_j in grid:
        node = spec.with_theta(j, float(theta_j))
        lo, hi = lo0, hi0
        e_lo, rep_lo, cv_lo = efficiency_at(node, lo, warm)
        e_hi, rep_hi, cv_hi = efficiency_at(node, hi, cv_lo)
        warm = cv_lo
        sign = 1.0 if e_hi >= e_lo else -1.0
        if abs(e_lo - target) <= tol:
            out.append(IsoNode(float(theta_j), lo, rep_lo))
            continue
        if abs(e_hi - target) <= tol:
            out.append(IsoNode(float(theta_j), hi, rep_hi))
            continue
        if not (min(e_lo, e_hi) < target < max(e_lo, e_hi)):
            out.append(IsoNode(float(theta_j), None, None))
            continue
        found = None
        cv_mid = cv_lo
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            e_mid, rep_mid, cv_mid = efficiency_at(node, mid, cv_mid)
            if abs(e_mid - target) <= tol:
                found = IsoNode(float(theta_j), mid, rep_mid)
                break
            if sign * (e_mid - target) < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * max(1.0, abs(hi)):
                break
        out.append(found if found is not None else IsoNode(float(theta_j), None, None))
    if all(node.gap for node in out):
        raise DomainError(
            f"efficiency target {target} is unattainable anywhere on the grid"
        )
    return out


def detect_nonmonotone_cutoffs(sweep) -> list[tuple[int, tuple[float, float], float]]:
    """Colleges whose cutoff rises along the sweep, as merged theta intervals.

    A step counts when the forward difference exceeds +1e-7; consecutive
    flagged steps merge into one interval carrying the largest increment.
    An empty result certifies monotonicity at grid resolution.
    """
    thetas: list[float] = []
    paths: list[np.ndarray] = []
    for row in sweep:
        if isinstance(row, SweepRow):
            t, cv = row.theta, row.cutoffs
        else:
            t, cv = row[0], row[1]
        thetas.append(float(t))
        paths.append(cv.cutoffs if isinstance(cv, CutoffVector) else np.asarray(cv, dtype=float))
    if len(thetas) < 2:
        return []
    if any(b <= a for a, b in zip(thetas, thetas[1:])):
        raise InputError("sweep grid must be strictly increasing")
    P = np.vstack(paths)
    out: list[tuple[int, tuple[float, float], float]] = []
    for i in range(P.shape[1]):
        diffs = np.diff(P[:, i])
        flagged = diffs > NONMONOTONE_SLACK
        t = 0
        while t < len(flagged):
            if not flagged[t]:
                t += 1
                continue
            start = t
            while t < len(flagged) and flagged[t]:
                t += 1
            run = diffs[start:t]
            out.append((i, (thetas[start], thetas[t]), float(np.max(run))))
    return out
