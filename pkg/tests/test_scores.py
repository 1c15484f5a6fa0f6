"""Score-distribution probabilities: Sklar consistency, demand sets, dominance."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from admissions import copula as cp
from admissions import scores as sc
from admissions.errors import ConstructionError, InputError


def unit_uniform_model(family, theta, m):
    return sc.GroupScoreModel(tuple(sc.Uniform(0.0, 1.0) for _ in range(m)), family, theta)


MODELS = [
    unit_uniform_model(cp.Independence(2), 0.0, 2),
    unit_uniform_model(cp.GaussianEquicorrelated(2), 0.5, 2),
    unit_uniform_model(cp.GaussianEquicorrelated(3), -0.3, 3),
    unit_uniform_model(cp.Clayton(), 2.0, 2),
    unit_uniform_model(cp.Frank(), -4.0, 2),
    unit_uniform_model(cp.Gumbel(), 3.0, 2),
    sc.GroupScoreModel(
        (sc.Gaussian(0.0, 1.0), sc.Gaussian(0.2, 2.0), sc.Uniform(-1.0, 3.0)),
        cp.GaussianEquicorrelated(3),
        0.4,
    ),
]


def test_empty_subset_is_one():
    model = MODELS[0]
    assert sc.below_cutoff_probability(model, [], (0.3, 0.9)) == 1.0


def test_independent_uniform_square():
    model = unit_uniform_model(cp.Independence(2), 0.0, 2)
    got = sc.below_cutoff_probability(model, [0, 1], (0.5, 0.5))
    assert got == pytest.approx(0.25, abs=1e-12)


def test_gaussian_half_cutoffs_orthant():
    model = unit_uniform_model(cp.GaussianEquicorrelated(2), 0.5, 2)
    got = sc.below_cutoff_probability(model, [0, 1], (0.5, 0.5))
    assert got == pytest.approx(1.0 / 3.0, abs=1e-9)


@pytest.mark.parametrize("model", MODELS)
def test_sklar_singleton_equals_marginal_cdf(model):
    rng = np.random.default_rng(5)
    for _ in range(20):
        P = [mg.ppf(q) for mg, q in zip(model.marginals, rng.uniform(0.05, 0.95, model.m))]
        for i in range(model.m):
            got = sc.below_cutoff_probability(model, [i], P)
            assert got == pytest.approx(model.marginals[i].cdf(P[i]), abs=1e-9)


@pytest.mark.parametrize("model", MODELS)
def test_demand_sets_partition_total_probability(model):
    rng = np.random.default_rng(11)
    import itertools

    for sigma in itertools.permutations(range(model.m)):
        P = [mg.ppf(q) for mg, q in zip(model.marginals, rng.uniform(0.1, 0.9, model.m))]
        parts = [
            sc.demand_set_probability(model, sigma, k, P)
            for k in range(1, model.m + 1)
        ]
        rest = sc.below_cutoff_probability(model, range(model.m), P)
        assert sum(parts) + rest == pytest.approx(1.0, abs=1e-9)


def test_rank_one_depends_only_on_first_marginal():
    P = (0.7, 0.4)
    for model in MODELS[:6]:
        if model.m != 2:
            continue
        got = sc.demand_set_probability(model, (0, 1), 1, P)
        assert got == pytest.approx(0.3, abs=1e-9)


def test_second_choice_mass_independence_vs_comonotone():
    ind = unit_uniform_model(cp.Independence(2), 0.0, 2)
    como = unit_uniform_model(cp.Comonotone(2), 0.0, 2)
    P = (0.7, 0.7)
    assert sc.demand_set_probability(ind, (0, 1), 2, P) == pytest.approx(0.21, abs=1e-12)
    assert sc.demand_set_probability(como, (0, 1), 2, P) == pytest.approx(0.0, abs=1e-12)


def test_cutoffs_outside_support_clamp():
    model = unit_uniform_model(cp.Independence(2), 0.0, 2)
    assert sc.below_cutoff_probability(model, [0, 1], (-3.0, 0.5)) == pytest.approx(0.0)
    assert sc.below_cutoff_probability(model, [0], (2.0, 0.5)) == pytest.approx(1.0)


@given(
    q1=st.floats(0.05, 0.95), q2=st.floats(0.05, 0.95), bump=st.floats(0.0, 0.04),
    theta=st.floats(-0.9, 0.95),
)
@settings(max_examples=60, deadline=None)
def test_below_cutoff_monotone_in_cutoffs_and_theta(q1, q2, bump, theta):
    base = unit_uniform_model(cp.GaussianEquicorrelated(2), theta, 2)
    lo = sc.below_cutoff_probability(base, [0, 1], (q1, q2))
    hi = sc.below_cutoff_probability(base, [0, 1], (q1 + bump, q2))
    assert hi >= lo - 1e-9
    hotter = unit_uniform_model(cp.GaussianEquicorrelated(2), min(theta + bump, 0.99), 2)
    assert sc.below_cutoff_probability(hotter, [0, 1], (q1, q2)) >= lo - 1e-9


def test_fosd_mean_shifted_gaussians():
    a = sc.GroupScoreModel(
        (sc.Gaussian(0.2, 1.0), sc.Gaussian(0.2, 1.0)), cp.GaussianEquicorrelated(2), 0.3
    )
    b = sc.GroupScoreModel(
        (sc.Gaussian(0.0, 1.0), sc.Gaussian(0.0, 1.0)), cp.GaussianEquicorrelated(2), 0.3
    )
    assert sc.fosd_check(a, b) is True
    assert sc.fosd_check(b, a) is False


def test_fosd_identical_marginals_is_false():
    m = unit_uniform_model(cp.Independence(2), 0.0, 2)
    assert sc.fosd_check(m, m) is False


def test_fosd_requires_dominance_at_every_college():
    a = sc.GroupScoreModel(
        (sc.Gaussian(0.2, 1.0), sc.Gaussian(0.0, 1.0)), cp.GaussianEquicorrelated(2), 0.3
    )
    b = sc.GroupScoreModel(
        (sc.Gaussian(0.0, 1.0), sc.Gaussian(0.0, 1.0)), cp.GaussianEquicorrelated(2), 0.3
    )
    assert sc.fosd_check(a, b) is False


def test_piecewise_linear_marginal_roundtrip():
    pl = sc.PiecewiseLinearCdf(xs=(0.0, 0.25, 1.0, 2.0), ps=(0.0, 0.4, 0.9, 1.0))
    for q in np.linspace(0.01, 0.99, 17):
        assert pl.cdf(pl.ppf(q)) == pytest.approx(q, abs=1e-12)
    with pytest.raises(ConstructionError):
        sc.PiecewiseLinearCdf(xs=(0.0, 1.0, 0.5), ps=(0.0, 0.5, 1.0))
    with pytest.raises(ConstructionError):
        sc.PiecewiseLinearCdf(xs=(0.0, 1.0), ps=(0.1, 1.0))


def test_validation_errors():
    model = MODELS[0]
    with pytest.raises(InputError):
        sc.demand_set_probability(model, (0, 0), 1, (0.5, 0.5))
    with pytest.raises(InputError):
        sc.demand_set_probability(model, (0, 1), 3, (0.5, 0.5))
    with pytest.raises(InputError):
        sc.below_cutoff_probability(model, [5], (0.5, 0.5))
    with pytest.raises(ConstructionError):
        sc.GroupScoreModel((sc.Uniform(0, 1),), cp.Independence(2), 0.0)
