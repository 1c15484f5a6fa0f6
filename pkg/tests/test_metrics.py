"""Rank, unmatched, efficiency, and inequality metrics plus sweep tooling."""

from __future__ import annotations

import math

import numpy as np
import pytest

from _markets import random_full_market, symmetric_market
from admissions import copula as cp
from admissions import metrics as mt
from admissions import scores as sc
from admissions import solver as sv
from admissions.errors import DomainError, InputError


def uniform_model(theta: float, m: int = 2) -> sc.GroupScoreModel:
    return sc.GroupScoreModel(
        tuple(sc.Uniform(0.0, 1.0) for _ in range(m)),
        cp.GaussianEquicorrelated(m),
        theta,
    )


def two_group_market(theta1: float, theta2: float, *, models=None) -> sv.MarketSpec:
    if models is None:
        models = (uniform_model(theta1), uniform_model(theta2))
    return sv.MarketSpec(
        alpha=(0.25, 0.25),
        gammas=(0.5, 0.5),
        betas=((0.5, 0.5), (0.5, 0.5)),
        models=models,
    )


def fig3_style_market(theta2: float = 0.0) -> sv.MarketSpec:
    beta = (0.5, 1.0 / 16, 0.25, 1.0 / 32, 0.125, 1.0 / 32)
    return sv.MarketSpec(
        alpha=(1.0 / 15, 1.0 / 15, 8.0 / 15),
        gammas=(0.5, 0.5),
        betas=(beta, beta),
        models=(uniform_model(1.0 / 3, 3), uniform_model(theta2, 3)),
    )


def solved_report(spec: sv.MarketSpec) -> mt.MetricsReport:
    return mt.compute_metrics(spec, sv.solve_market_clearing(spec))


def test_independent_benchmark_efficiency_and_unmatched():
    spec = sv.MarketSpec(
        alpha=(0.25, 0.25), gammas=(1.0,), betas=((0.5, 0.5),),
        models=(uniform_model(0.0),),
    )
    rep = solved_report(spec)
    assert rep.efficiency == pytest.approx(1.0 - math.sqrt(0.5), abs=1e-9)
    assert rep.unmatched[0] == pytest.approx(0.5, abs=1e-9)


def test_comonotone_benchmark_efficiency_rises_unmatched_constant():
    spec = sv.MarketSpec(
        alpha=(0.25, 0.25), gammas=(1.0,), betas=((0.5, 0.5),),
        models=(uniform_model(0.0),),
    )
    rep1 = solved_report(spec.with_theta(0, 1.0))
    assert rep1.efficiency == pytest.approx(0.5, abs=1e-9)
    assert rep1.unmatched[0] == pytest.approx(0.5, abs=1e-9)
    assert rep1.efficiency > solved_report(spec).efficiency


def test_identical_marginals_equal_first_choice_probability():
    # groups share every college's score distribution, so the chance of
    # winning a given first choice cannot depend on the group
    spec = two_group_market(0.1, 0.8)
    rep = solved_report(spec)
    for s, sigma in enumerate(sv.preference_lists(2)):
        assert rep.ranks[0][s][0] == pytest.approx(rep.ranks[1][s][0], abs=1e-12)


def test_rank_non_decreasing_in_k_and_last_equals_matched():
    spec = random_full_market(13, m=3, kind="gaussian", groups=2)
    rep = solved_report(spec)
    for j in range(spec.d):
        for row in rep.ranks[j]:
            assert all(b >= a - 1e-12 for a, b in zip(row, row[1:]))
            assert row[-1] == pytest.approx(1.0 - rep.unmatched[j], abs=1e-12)


def test_unmatched_rate_is_preference_list_independent():
    spec = random_full_market(4, m=3, kind="gaussian", groups=3)
    rep = solved_report(spec)
    for j in range(spec.d):
        last = [row[-1] for row in rep.ranks[j]]
        assert max(last) - min(last) <= 1e-9


def test_efficiency_is_first_choice_aggregate():
    spec = random_full_market(8, m=2, kind="clayton", groups=2)
    rep = solved_report(spec)
    agg = sum(
        g * sum(b * row[0] for b, row in zip(beta, rep.ranks[j]))
        for j, (g, beta) in enumerate(zip(spec.gammas, spec.betas))
    )
    assert rep.efficiency == pytest.approx(agg, abs=1e-14)


def test_conservation_of_unmatched_mass():
    for seed in (0, 1):
        spec = random_full_market(seed, m=2, kind="gaussian", groups=2)
        assert spec.constrained_capacity
        rep = solved_report(spec)
        total = sum(g * u for g, u in zip(spec.gammas, rep.unmatched))
        assert total == pytest.approx(1.0 - sum(spec.alpha), abs=1e-8)


def test_inequality_matrix_symmetry_and_definition():
    spec = two_group_market(0.1, 0.8)
    rep = solved_report(spec)
    assert rep.inequality[0][1] == rep.inequality[1][0]
    assert rep.inequality[0][1] == pytest.approx(
        abs(rep.unmatched[0] - rep.unmatched[1]), abs=1e-15
    )
    assert rep.inequality[0][0] == 0.0


def test_lower_correlation_group_is_less_unmatched():
    rep = solved_report(two_group_market(0.2, 0.7))
    assert rep.unmatched[0] < rep.unmatched[1]
    assert rep.inequality[0][1] > 0.0


def test_dominating_group_attains_every_rank_more_often():
    strong = sc.GroupScoreModel(
        (sc.Gaussian(0.3, 1.0), sc.Gaussian(0.3, 1.0)),
        cp.GaussianEquicorrelated(2), 0.4,
    )
    weak = sc.GroupScoreModel(
        (sc.Gaussian(0.0, 1.0), sc.Gaussian(0.0, 1.0)),
        cp.GaussianEquicorrelated(2), 0.4,
    )
    spec = two_group_market(0.0, 0.0, models=(strong, weak))
    rep = solved_report(spec)
    for s in range(2):
        for k in range(2):
            assert rep.ranks[0][s][k] > rep.ranks[1][s][k]
    assert rep.unmatched[0] < rep.unmatched[1]
    assert rep.inequality[0][1] > 0.0


@pytest.mark.parametrize("seed", [3, 9])
def test_two_college_rank_monotone_in_other_groups_theta(seed):
    spec = random_full_market(seed, m=2, kind="gaussian", groups=2)
    grid = [0.0, 0.3, 0.6, 0.9]
    reports = [solved_report(spec.with_theta(1, t)) for t in grid]
    for a, b in zip(reports, reports[1:]):
        for s in range(2):
            for k in range(2):
                assert b.ranks[0][s][k] >= a.ranks[0][s][k] - 1e-9
        assert b.unmatched[0] <= a.unmatched[0] + 1e-9
        assert b.unmatched[1] >= a.unmatched[1] - 1e-9


@pytest.mark.parametrize("seed", [3, 9])
def test_two_college_own_first_choice_monotone_in_own_theta(seed):
    spec = random_full_market(seed, m=2, kind="gaussian", groups=2)
    grid = [0.0, 0.3, 0.6, 0.9]
    reports = [solved_report(spec.with_theta(0, t)) for t in grid]
    for a, b in zip(reports, reports[1:]):
        for s in range(2):
            assert b.ranks[0][s][0] >= a.ranks[0][s][0] - 1e-9


def test_metric_sweep_efficiency_increasing_on_symmetric_market():
    spec = sv.MarketSpec(
        alpha=(0.25, 0.25), gammas=(1.0,), betas=((0.5, 0.5),),
        models=(uniform_model(0.0),),
    )
    rows = mt.metric_sweep(spec, 0, [0.0, 0.5, 0.99])
    effs = [r.report.efficiency for r in rows]
    assert effs[0] < effs[1] < effs[2]
    assert [r.theta for r in rows] == [0.0, 0.5, 0.99]


def test_metric_sweep_single_group_unmatched_constant():
    spec = sv.MarketSpec(
        alpha=(0.25, 0.25), gammas=(1.0,), betas=((0.5, 0.5),),
        models=(uniform_model(0.0),),
    )
    rows = mt.metric_sweep(spec, 0, np.linspace(0.0, 0.9, 5))
    for r in rows:
        assert r.report.unmatched[0] == pytest.approx(0.5, abs=1e-8)


def test_detect_nonmonotone_empty_for_two_colleges():
    spec = random_full_market(6, m=2, kind="gaussian", groups=2)
    rows = mt.metric_sweep(spec, 0, np.linspace(0.0, 0.95, 8))
    assert mt.detect_nonmonotone_cutoffs(rows) == []


def test_detect_nonmonotone_empty_for_symmetric_three_colleges():
    spec = symmetric_market(0.2, m=3, alpha_each=0.2)
    sym2 = sv.MarketSpec(
        alpha=spec.alpha, gammas=(0.5, 0.5), betas=spec.betas * 2,
        models=spec.models * 2,
    )
    rows = mt.metric_sweep(sym2, 1, np.linspace(0.0, 0.9, 6))
    assert mt.detect_nonmonotone_cutoffs(rows) == []


def test_detect_nonmonotone_flags_counterexample_college():
    rows = mt.metric_sweep(fig3_style_market(), 1, np.arange(0.80, 0.99, 0.02))
    flags = mt.detect_nonmonotone_cutoffs(rows)
    assert flags, "expected a rising cutoff on this configuration"
    colleges = {c for c, _, _ in flags}
    assert colleges == {2}
    for _, (lo, hi), inc in flags:
        assert 0.79 <= lo < hi <= 0.99
        assert inc > 1e-7


def test_first_choice_rank_falls_exactly_where_third_cutoff_rises():
    rows = mt.metric_sweep(fig3_style_market(), 1, np.arange(0.80, 0.99, 0.02))
    sigma_index = sv.preference_lists(3).index((2, 0, 1))
    p3 = [r.cutoffs.P[2] for r in rows]
    r1 = [r.report.ranks[0][sigma_index][0] for r in rows]
    for (pa, pb), (ra, rb) in zip(zip(p3, p3[1:]), zip(r1, r1[1:])):
        if pb - pa > 1e-7:
            assert rb < ra
        elif pa - pb > 1e-7:
            assert rb > ra


def test_detect_nonmonotone_requires_sorted_grid():
    spec = random_full_market(6, m=2, kind="gaussian")
    rows = mt.metric_sweep(spec, 0, [0.0, 0.5])
    with pytest.raises(InputError):
        mt.detect_nonmonotone_cutoffs(list(reversed(rows)))
    assert mt.detect_nonmonotone_cutoffs(rows[:1]) == []


def test_detect_accepts_plain_theta_cutoff_pairs():
    rows = [
        (0.0, sv.CutoffVector((0.5, 0.3), (True, True))),
        (0.5, sv.CutoffVector((0.4, 0.35), (True, True))),
    ]
    flags = mt.detect_nonmonotone_cutoffs(rows)
    assert flags == [(1, (0.0, 0.5), pytest.approx(0.05))]


def test_iso_efficiency_symmetric_market_identity():
    spec = two_group_market(0.4, 0.4)
    target = solved_report(spec).efficiency
    nodes = mt.trace_iso_efficiency(spec, (0, 1), target, [0.2, 0.4, 0.6])
    assert all(not n.gap for n in nodes)
    mid = nodes[1]
    assert mid.theta_other == pytest.approx(0.4, abs=1e-3)
    assert mid.report.efficiency == pytest.approx(target, abs=1e-6)
    others = [n.theta_other for n in nodes]
    assert others[0] > others[1] > others[2]


def test_iso_efficiency_gaussian_mean_shift_contour():
    strong = sc.GroupScoreModel(
        (sc.Gaussian(0.2, 1.0), sc.Gaussian(0.2, 1.0)),
        cp.GaussianEquicorrelated(2), 0.3,
    )
    weak = sc.GroupScoreModel(
        (sc.Gaussian(0.0, 1.0), sc.Gaussian(0.0, 1.0)),
        cp.GaussianEquicorrelated(2), 0.3,
    )
    spec = two_group_market(0.0, 0.0, models=(strong, weak))
    target = solved_report(spec).efficiency
    nodes = mt.trace_iso_efficiency(spec, (0, 1), target, [0.15, 0.3, 0.45])
    traced = [n for n in nodes if not n.gap]
    assert len(traced) == 3
    for a, b in zip(traced, traced[1:]):
        assert b.theta_other < a.theta_other
    for n in traced:
        assert n.report.efficiency == pytest.approx(target, abs=1e-6)


def test_iso_efficiency_unattainable_target_raises():
    spec = two_group_market(0.3, 0.3)
    with pytest.raises(DomainError):
        mt.trace_iso_efficiency(spec, (0, 1), 0.99, [0.2, 0.4])


def test_iso_efficiency_group_validation():
    spec = two_group_market(0.3, 0.3)
    with pytest.raises(InputError):
        mt.trace_iso_efficiency(spec, (0, 0), 0.3, [0.2])
    with pytest.raises(InputError):
        mt.trace_iso_efficiency(spec, (0, 5), 0.3, [0.2])


def test_rank_accessor_validation():
    rep = solved_report(two_group_market(0.2, 0.2))
    assert rep.rank(0, (0, 1), 1) == rep.ranks[0][0][0]
    assert rep.rank(1, (1, 0), 2) == rep.ranks[1][1][1]
    with pytest.raises(InputError):
        rep.rank(0, (0, 0), 1)
    with pytest.raises(InputError):
        rep.rank(0, (0, 1), 3)
