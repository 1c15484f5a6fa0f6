"""Finite-market deferred acceptance as a Monte Carlo oracle.

Samples N students from a continuum market, runs round-based
student-proposing deferred acceptance, and compares empirical cutoffs and
metrics against the continuum solution.  Scores are continuous so ties
are probability zero; exact float collisions are broken by student index
(lower index wins), never silently.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .copula import copula_sample
from .errors import InputError
from .metrics import MetricsReport
from .solver import CutoffVector, MarketSpec, preference_lists, solve_market_clearing

EXHAUSTIVE_SCAN_LIMIT = 10_000
SAMPLED_SCAN_SIZE = 10_000


@dataclass(frozen=True, eq=False)
class FiniteMarket:
    """N sampled students with group labels, list indices, and raw scores."""

    spec: MarketSpec
    groups: np.ndarray
    pref_index: np.ndarray
    scores: np.ndarray
    seats: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.groups.size

    @functools.cached_property
    def prefs(self) -> np.ndarray:
        table = np.array(preference_lists(self.spec.m), dtype=int)
        return table[self.pref_index]


@dataclass(frozen=True, eq=False)
class FiniteOutcome:
    """Assignment (college index, -1 unmatched), cutoffs, empirical metrics."""

    assignment: np.ndarray
    cutoffs: tuple[float, ...]
    full: tuple[bool, ...]
    report: MetricsReport


def sample_finite_market(spec: MarketSpec, N: int, seed: int) -> FiniteMarket:
    """Draw N students; deterministic in seed, one stream per purpose."""
    if N < 1:
        raise InputError("need at least one student")
    ss = np.random.SeedSequence(seed)
    group_ss, pref_ss, *score_ss = ss.spawn(2 + spec.d)
    rng = np.random.default_rng(group_ss)
    groups = rng.choice(spec.d, size=N, p=np.asarray(spec.gammas))
    pref_rng = np.random.default_rng(pref_ss)
    pref_index = np.empty(N, dtype=int)
    scores = np.empty((N, spec.m))
    nperm = math.factorial(spec.m)
    for j, model in enumerate(spec.models):
        members = np.where(groups == j)[0]
        if members.size == 0:
            continue
        pref_index[members] = pref_rng.choice(
            nperm, size=members.size, p=np.asarray(spec.betas[j])
        )
        u = copula_sample(
            model.family, model.theta, members.size,
            int(score_ss[j].generate_state(1)[0]),
        )
        for i in range(spec.m):
            scores[members, i] = model.marginals[i].ppf_batch(u[:, i])
    seats = tuple(int(a * N) for a in spec.alpha)
    return FiniteMarket(spec, groups, pref_index, scores, seats)


def _empirical_report(fm: FiniteMarket, assignment: np.ndarray) -> MetricsReport:
    spec = fm.spec
    m, d = spec.m, spec.d
    perms = preference_lists(m)
    prefs = fm.prefs
    rank = np.full(fm.n, m + 1, dtype=int)
    for k in range(m):
        rank[(assignment >= 0) & (prefs[:, k] == assignment)] = k + 1
    ranks = []
    unmatched = []
    for j in range(d):
        members = fm.groups == j
        rows = []
        for s in range(len(perms)):
            sel = members & (fm.pref_index == s)
            cnt = int(sel.sum())
            if cnt == 0:
                rows.append((math.nan,) * m)
            else:
                rows.append(
                    tuple(float(np.mean(rank[sel] <= k + 1)) for k in range(m))
                )
        ranks.append(tuple(rows))
        total = int(members.sum())
        unmatched.append(
            math.nan if total == 0 else float(np.mean(assignment[members] < 0))
        )
    efficiency = float(np.mean(rank == 1))
    inequality = tuple(
        tuple(abs(unmatched[j] - unmatched[l]) for l in range(d)) for j in range(d)
    )
    return MetricsReport(
        ranks=tuple(ranks), unmatched=tuple(unmatched),
        efficiency=efficiency, inequality=inequality,
    )


def blocking_pairs(fm: FiniteMarket, outcome: FiniteOutcome,
                   students=None) -> list[tuple[int, int]]:
    """(student, college) pairs that would jointly defect, empty iff stable.

    A student blocks with a college they strictly prefer to their assignment
    when it is not full or when they beat its weakest admit, comparing
    (score, -index) so float collisions break by student index.
    """
    prefs = fm.prefs
    m = fm.spec.m
    admitted = [np.where(outcome.assignment == c)[0] for c in range(m)]
    worst_key = []
    for c in range(m):
        if admitted[c].size:
            sc = fm.scores[admitted[c], c]
            order = np.lexsort((-admitted[c], sc))
            s0 = admitted[c][order[0]]
            worst_key.append((fm.scores[s0, c], -s0))
        else:
            worst_key.append((math.inf, 0))
    scan = range(fm.n) if students is None else students
    out = []
    for s in scan:
        a = outcome.assignment[s]
        for k in range(m):
            c = prefs[s, k]
            if c == a:
                break
            if fm.seats[c] == 0:
                continue
            if len(admitted[c]) < fm.seats[c]:
                out.append((int(s), int(c)))
                break
            if (fm.scores[s, c], -s) > worst_key[c]:
                out.append((int(s), int(c)))
                break
    return out


def run_deferred_acceptance(fm: FiniteMarket) -> FiniteOutcome:
    """Round-based student-proposing deferred acceptance.

    Every unassigned student proposes down their list one college per
    round; colleges tentatively keep their best seats-many proposals.
    Verified stable post-hoc (exhaustively for N <= 10^4, sampled above).
    """
    spec = fm.spec
    m, n = spec.m, fm.n
    prefs = fm.prefs
    pointer = np.zeros(n, dtype=int)
    assignment = np.full(n, -1, dtype=int)
    holders: list[np.ndarray] = [np.empty(0, dtype=int) for _ in range(m)]
    active = np.arange(n)
    while active.size:
        targets = prefs[active, pointer[active]]
        pointer[active] += 1
        displaced_all = []
        for c in np.unique(targets):
            newbies = active[targets == c]
            if fm.seats[c] == 0:
                displaced_all.append(newbies)
                continue
            pool = np.concatenate((holders[c], newbies))
            sc = fm.scores[pool, c]
            # best first: high score, then low student index on collisions
            order = np.lexsort((pool, -sc))
            kept = pool[order[: fm.seats[c]]]
            dropped = pool[order[fm.seats[c]:]]
            holders[c] = kept
            assignment[kept] = c
            if dropped.size:
                assignment[dropped] = -1
                displaced_all.append(dropped)
        if displaced_all:
            cand = np.concatenate(displaced_all)
            active = cand[pointer[cand] < m]
        else:
            active = np.empty(0, dtype=int)

    lb = fm.spec.lower_bounds()
    cutoffs = []
    full = []
    for c in range(m):
        is_full = holders[c].size == fm.seats[c] and fm.seats[c] > 0
        full.append(is_full)
        if is_full:
            cutoffs.append(float(fm.scores[holders[c], c].min()))
        elif fm.seats[c] == 0:
            cutoffs.append(math.inf)
        else:
            cutoffs.append(float(lb[c]))
    outcome = FiniteOutcome(
        assignment=assignment,
        cutoffs=tuple(cutoffs),
        full=tuple(full),
        report=_empirical_report(fm, assignment),
    )
    if n <= EXHAUSTIVE_SCAN_LIMIT:
        scan = None
    else:
        scan = np.random.default_rng(0).choice(n, size=SAMPLED_SCAN_SIZE, replace=False)
    bad = blocking_pairs(fm, outcome, scan)
    if bad:
        raise RuntimeError(f"deferred acceptance produced blocking pairs: {bad[:3]}")
    return outcome


@dataclass(frozen=True)
class OracleRow:
    """One seed's empirical run and its deviations from the continuum."""

    seed: int
    outcome: FiniteOutcome
    cutoff_deviation: float
    efficiency_deviation: float
    unmatched_deviation: float
    rank_deviation: float
    flagged: tuple[str, ...]


@dataclass(frozen=True)
class OracleReport:
    """Continuum reference plus per-seed deviation rows; band is 5/sqrt(N)."""

    n_students: int
    band: float
    continuum: CutoffVector
    reference: MetricsReport
    rows: tuple[OracleRow, ...]

    @property
    def max_cutoff_deviation(self) -> float:
        return max(r.cutoff_deviation for r in self.rows)


def oracle_compare(spec: MarketSpec, N: int, seeds,
                   tol: float = 1e-8) -> OracleReport:
    """Empirical-vs-continuum deviation table over independent seeds."""
    from .metrics import compute_metrics

    cv = solve_market_clearing(spec, tol=tol)
    ref = compute_metrics(spec, cv)
    band = 5.0 / math.sqrt(N)
    rows = []
    for seed in seeds:
        fm = sample_finite_market(spec, N, int(seed))
        outcome = run_deferred_acceptance(fm)
        cut_dev = max(
            abs(e - p)
            for e, p, f in zip(outcome.cutoffs, cv.P, outcome.full)
            if f or not math.isinf(e)
        )
        eff_dev = abs(outcome.report.efficiency - ref.efficiency)
        un_dev = max(
            abs(e - r)
            for e, r in zip(outcome.report.unmatched, ref.unmatched)
            if not math.isnan(e)
        )
        rank_dev = 0.0
        for j in range(spec.d):
            for s in range(len(outcome.report.ranks[j])):
                for k in range(spec.m):
                    e = outcome.report.ranks[j][s][k]
                    if not math.isnan(e):
                        rank_dev = max(rank_dev, abs(e - ref.ranks[j][s][k]))
        flagged = tuple(
            name
            for name, dev in (
                ("cutoff", cut_dev), ("efficiency", eff_dev),
                ("unmatched", un_dev), ("rank", rank_dev),
            )
            if dev > band
        )
        rows.append(
            OracleRow(int(seed), outcome, float(cut_dev), float(eff_dev),
                      float(un_dev), float(rank_dev), flagged)
        )
    return OracleReport(N, band, cv, ref, tuple(rows))
