"""Composite tie-break copulas built from priority classes."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from admissions import copula as cp
from admissions import metrics as mt
from admissions import solver as sv
from admissions import tiebreak as tbm
from admissions.errors import ConstructionError, DomainError, InputError


def proof_figure_tb(theta: float = 0.5) -> tbm.TieBreakSpec:
    return tbm.TieBreakSpec(
        ((0.3, 0.3, 0.4), (0.4, 0.6)), cp.GaussianEquicorrelated(2), theta
    )


def single_class_tb(theta: float, m: int = 2) -> tbm.TieBreakSpec:
    return tbm.TieBreakSpec(
        tuple((1.0,) for _ in range(m)), cp.GaussianEquicorrelated(m), theta
    )


def signed_box_mass(comp: tbm.CompositeTieBreak, theta: float, lo, hi) -> float:
    m = comp.m
    total = 0.0
    for choice in itertools.product((0, 1), repeat=m):
        corner = [hi[i] if c else lo[i] for i, c in enumerate(choice)]
        sign = (-1.0) ** (m - sum(choice))
        total += sign * cp.copula_cdf(comp, theta, corner)
    return total


def test_single_class_reduces_to_base_copula():
    tb = single_class_tb(0.5)
    base = cp.GaussianEquicorrelated(2)
    for u in [(0.3, 0.7), (0.5, 0.5), (0.05, 0.9), (0.8, 0.8)]:
        got = tbm.composite_copula_cdf(tb, 0.5, u)
        assert got == pytest.approx(cp.copula_cdf(base, 0.5, u), abs=1e-14)


def test_independence_base_factorizes_within_cells():
    tb = tbm.TieBreakSpec(((0.3, 0.3, 0.4), (0.4, 0.6)), cp.Independence(2), 0.0)
    comp = tbm.CompositeTieBreak(tb)
    # a box strictly inside cell (1, 1): mass is the cell mass times the
    # product of rescaled side lengths
    lo, hi = (0.35, 0.5), (0.55, 0.9)
    got = signed_box_mass(comp, 0.0, lo, hi)
    want = 0.18 * ((0.55 - 0.35) / 0.3) * ((0.9 - 0.5) / 0.6)
    assert got == pytest.approx(want, abs=1e-12)


def test_proof_figure_marginals_are_uniform():
    tb = proof_figure_tb()
    for x in np.arange(0.1, 0.95, 0.1):
        assert tbm.composite_copula_cdf(tb, 0.5, (x, 1.0)) == pytest.approx(x, abs=1e-9)
        assert tbm.composite_copula_cdf(tb, 0.5, (1.0, x)) == pytest.approx(x, abs=1e-9)


def test_grounded_and_top_corner():
    tb = proof_figure_tb()
    assert tbm.composite_copula_cdf(tb, 0.5, (0.0, 0.7)) == 0.0
    assert tbm.composite_copula_cdf(tb, 0.5, (0.4, 0.0)) == 0.0
    assert tbm.composite_copula_cdf(tb, 0.5, (1.0, 1.0)) == pytest.approx(1.0, abs=1e-12)


def test_boxes_have_nonnegative_mass():
    tb = proof_figure_tb()
    comp = tbm.CompositeTieBreak(tb)
    rng = np.random.default_rng(3)
    for _ in range(60):
        a = rng.random(2)
        b = rng.random(2)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        assert signed_box_mass(comp, 0.5, lo, hi) >= -1e-9


def test_cdf_continuous_across_cell_boundaries():
    tb = proof_figure_tb()
    for x in (0.3, 0.6):
        at = tbm.composite_copula_cdf(tb, 0.5, (x, 0.7))
        below = tbm.composite_copula_cdf(tb, 0.5, (x - 1e-9, 0.7))
        above = tbm.composite_copula_cdf(tb, 0.5, (x + 1e-9, 0.7))
        assert below <= at <= above
        assert above - below < 1e-8


def test_coherence_inherited_from_base():
    tb_grid = np.linspace(0.0, 0.95, 8)
    points = [(0.25, 0.45), (0.5, 0.5), (0.75, 0.2), (0.13, 0.88)]
    for x in points:
        vals = [tbm.composite_copula_cdf(proof_figure_tb(t), t, x) for t in tb_grid]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_gaussian_endpoint_admissible_through_composite():
    tb = proof_figure_tb(1.0)
    comp = tbm.CompositeTieBreak(tb)
    assert comp.domain.contains(1.0)
    got = tbm.composite_copula_cdf(tb, 1.0, (0.35, 0.35))
    # comonotone base: each cell contributes kappa_p * min of the rescaled coords
    _, kappa, lower, width = tb._tables
    want = float(
        kappa @ np.min(np.clip((np.array([0.35, 0.35]) - lower) / width, 0.0, 1.0), axis=1)
    )
    assert got == pytest.approx(want, abs=1e-14)
    with pytest.raises(DomainError):
        tbm.composite_copula_cdf(tb, 1.2, (0.5, 0.5))


def test_custom_cell_table_accepted_and_canonicalized():
    cells = {
        (0, 0): 0.5, (0, 1): 0.0,
        (1, 0): 0.0, (1, 1): 0.5,
    }
    tb = tbm.TieBreakSpec(((0.5, 0.5), (0.5, 0.5)), cp.Independence(2), 0.0, cells)
    assert tb.cells == (((0, 0), 0.5), ((0, 1), 0.0), ((1, 0), 0.0), ((1, 1), 0.5))
    # perfectly aligned classes: all mass on the diagonal cells
    got = tbm.composite_copula_cdf(tb, 0.0, (0.25, 0.25))
    assert got == pytest.approx(0.5 * 0.5 * 0.5, abs=1e-12)


def test_inconsistent_cell_tables_rejected():
    masses = ((0.5, 0.5), (0.5, 0.5))
    fam = cp.Independence(2)
    bad_marginal = {(0, 0): 0.4, (0, 1): 0.2, (1, 0): 0.2, (1, 1): 0.2}
    with pytest.raises(ConstructionError):
        tbm.TieBreakSpec(masses, fam, 0.0, bad_marginal)
    short = {(0, 0): 0.5, (1, 1): 0.5}
    with pytest.raises(ConstructionError):
        tbm.TieBreakSpec(masses, fam, 0.0, short)
    negative = {(0, 0): 0.6, (0, 1): -0.1, (1, 0): -0.1, (1, 1): 0.6}
    with pytest.raises(ConstructionError):
        tbm.TieBreakSpec(masses, fam, 0.0, negative)


def test_class_mass_validation():
    fam = cp.Independence(2)
    with pytest.raises(ConstructionError):
        tbm.TieBreakSpec(((0.5, 0.5),), fam, 0.0)
    with pytest.raises(ConstructionError):
        tbm.TieBreakSpec(((0.7, 0.4), (1.0,)), fam, 0.0)
    with pytest.raises(ConstructionError):
        tbm.TieBreakSpec(((1.0, 0.0), (1.0,)), fam, 0.0)
    with pytest.raises(ConstructionError):
        tbm.TieBreakSpec(((-0.3, 1.3), (1.0,)), fam, 0.0)


def test_anchor_geometry():
    tb = proof_figure_tb()
    assert tb.shape == (3, 2)
    assert tb.anchors[0] == (0.0, 0.3, 0.6, 1.0)
    assert tb.anchors[1] == (0.0, 0.4, 1.0)
    assert tb.anchors[0][-1] == 1.0


def test_class_dominance_holds_by_construction():
    assert tbm.class_dominance_check(proof_figure_tb(), 0.5, 10_000, 11)
    assert tbm.class_dominance_check(proof_figure_tb(), 0.0, 10_000, 12)
    assert tbm.class_dominance_check(single_class_tb(0.7), 0.7, 1_000, 13)
    with pytest.raises(InputError):
        tbm.class_dominance_check(proof_figure_tb(), 0.5, 0, 1)


def test_sampler_is_deterministic_and_matches_cdf():
    tb = proof_figure_tb()
    comp = tbm.CompositeTieBreak(tb)
    a = cp.copula_sample(comp, 0.5, 2_000, 21)
    b = cp.copula_sample(comp, 0.5, 2_000, 21)
    assert np.array_equal(a, b)
    big = cp.copula_sample(comp, 0.5, 40_000, 22)
    for u in [(0.3, 0.5), (0.6, 0.4), (0.45, 0.8)]:
        emp = float(np.mean((big[:, 0] <= u[0]) & (big[:, 1] <= u[1])))
        want = tbm.composite_copula_cdf(tb, 0.5, u)
        se = math.sqrt(want * (1.0 - want) / 40_000)
        assert abs(emp - want) <= 5.0 * se


def test_market_rejects_zero_mass_cells():
    shell = sv.MarketShell(gammas=(1.0,), betas=((0.5, 0.5),), alpha=(0.25, 0.25))
    cells = {(0, 0): 0.5, (0, 1): 0.0, (1, 0): 0.0, (1, 1): 0.5}
    tb = tbm.TieBreakSpec(((0.5, 0.5), (0.5, 0.5)), cp.Independence(2), 0.0, cells)
    with pytest.raises(InputError, match=r"\(0, 1\)"):
        tbm.tiebreak_market((tb,), shell)


def test_market_shape_validation():
    shell = sv.MarketShell(gammas=(0.5, 0.5), betas=((0.5, 0.5),) * 2, alpha=(0.25, 0.25))
    with pytest.raises(InputError):
        tbm.tiebreak_market((single_class_tb(0.0),), shell)
    with pytest.raises(InputError):
        tbm.tiebreak_market((single_class_tb(0.0), single_class_tb(0.0, m=3)), shell)


def test_mixed_single_and_full_tiebreak_market():
    # identical uniform marginals; the group breaking ties with one common
    # lottery draw ends up unmatched more often than the independent group
    shell = sv.MarketShell(gammas=(0.5, 0.5), betas=((0.5, 0.5),) * 2, alpha=(0.25, 0.25))
    market = tbm.tiebreak_market((single_class_tb(0.0), single_class_tb(1.0)), shell)
    rep = mt.compute_metrics(market, sv.solve_market_clearing(market))
    assert rep.unmatched[0] < rep.unmatched[1]
    assert rep.inequality[0][1] > 0.0


def test_single_class_sweep_efficiency_strictly_increasing():
    shell = sv.MarketShell(gammas=(0.5, 0.5), betas=((0.5, 0.5),) * 2, alpha=(0.25, 0.25))
    market = tbm.tiebreak_market((single_class_tb(0.0), single_class_tb(0.0)), shell)
    rows = mt.metric_sweep(market, 1, [0.0, 0.25, 0.5, 0.75, 1.0])
    effs = [r.report.efficiency for r in rows]
    assert all(b > a for a, b in zip(effs, effs[1:]))


def test_multi_class_sweep_efficiency_increasing_when_cutoffs_interior():
    shell = sv.MarketShell(gammas=(0.5, 0.5), betas=((0.5, 0.5),) * 2, alpha=(0.2, 0.2))
    tb0 = tbm.TieBreakSpec(((0.5, 0.5), (0.5, 0.5)), cp.GaussianEquicorrelated(2), 0.3)
    market = tbm.tiebreak_market((tb0, tb0), shell)
    grid = [0.0, 0.3, 0.6, 0.9]
    rows = mt.metric_sweep(market, 1, grid)
    for r in rows:
        for p in r.cutoffs.P:
            # interior to the upper class cell, away from anchors
            assert 0.5 + 1e-3 < p < 1.0 - 1e-3
    effs = [r.report.efficiency for r in rows]
    assert all(b >= a - 1e-10 for a, b in zip(effs, effs[1:]))
