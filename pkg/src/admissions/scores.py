"""Group-level joint score distributions.

A group's m marginal score distributions are coupled by a copula; this module
evaluates the probabilities the demand system and the welfare metrics need:
mass below a set of cutoffs, demand-set probabilities per preference rank, and
first-order stochastic dominance between groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .copula import Copula, copula_cdf_batch
from .errors import ConstructionError, InputError


# ----------------------------------------------------------------------------
# marginals
# ----------------------------------------------------------------------------

class Marginal:
    """Continuous, strictly increasing CDF on its support."""

    lower: float
    upper: float

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def ppf(self, q: float) -> float:
        raise NotImplementedError

    def ppf_batch(self, q: np.ndarray) -> np.ndarray:
        return np.array([self.ppf(float(v)) for v in np.asarray(q, float)])


@dataclass(frozen=True)
class Uniform(Marginal):
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise ConstructionError("uniform marginal needs finite a < b")

    @property
    def lower(self) -> float:
        return self.a

    @property
    def upper(self) -> float:
        return self.b

    def cdf(self, x: float) -> float:
        return min(1.0, max(0.0, (x - self.a) / (self.b - self.a)))

    def ppf(self, q: float) -> float:
        return self.a + q * (self.b - self.a)

    def ppf_batch(self, q: np.ndarray) -> np.ndarray:
        return self.a + np.asarray(q, float) * (self.b - self.a)


@dataclass(frozen=True)
class Gaussian(Marginal):
    mean: float
    var: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and self.var > 0.0):
            raise ConstructionError("gaussian marginal needs finite mean, var > 0")

    @property
    def lower(self) -> float:
        return -math.inf

    @property
    def upper(self) -> float:
        return math.inf

    def cdf(self, x: float) -> float:
        if x == -math.inf:
            return 0.0
        if x == math.inf:
            return 1.0
        return float(ndtr((x - self.mean) / math.sqrt(self.var)))

    def ppf(self, q: float) -> float:
        return self.mean + math.sqrt(self.var) * float(ndtri(q))

    def ppf_batch(self, q: np.ndarray) -> np.ndarray:
        return self.mean + math.sqrt(self.var) * ndtri(np.asarray(q, float))


@dataclass(frozen=True)
class PiecewiseLinearCdf(Marginal):
    """CDF interpolated linearly through (x_k, p_k) knots, p_0 = 0, p_last = 1."""

    xs: tuple[float, ...]
    ps: tuple[float, ...]

    def __post_init__(self):
        xs, ps = np.asarray(self.xs, float), np.asarray(self.ps, float)
        if len(xs) != len(ps) or len(xs) < 2:
            raise ConstructionError("need matching knot arrays of length >= 2")
        if not (np.diff(xs) > 0).all() or not (np.diff(ps) > 0).all():
            raise ConstructionError("knots must be strictly increasing")
        if ps[0] != 0.0 or ps[-1] != 1.0:
            raise ConstructionError("CDF knots must start at 0 and end at 1")

    @property
    def lower(self) -> float:
        return self.xs[0]

    @property
    def upper(self) -> float:
        return self.xs[-1]

    def cdf(self, x: float) -> float:
        return float(np.interp(x, self.xs, self.ps))

    def ppf(self, q: float) -> float:
        return float(np.interp(q, self.ps, self.xs))

    def ppf_batch(self, q: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(q, float), self.ps, self.xs)


# ----------------------------------------------------------------------------
# preference lists and the group model
# ----------------------------------------------------------------------------

def validate_preference_list(sigma: Sequence[int], m: int) -> tuple[int, ...]:
    """sigma lists college indices (0-based) from favorite to least favorite."""
    s = tuple(int(i) for i in sigma)
    if sorted(s) != list(range(m)):
        raise InputError(f"preference list must be a permutation of 0..{m - 1}")
    return s


@dataclass(frozen=True)
class GroupScoreModel:
    """m marginals joined by a copula family at parameter theta."""

    marginals: tuple[Marginal, ...]
    family: Copula
    theta: float

    def __post_init__(self):
        if len(self.marginals) != self.family.m:
            raise ConstructionError(
                f"need {self.family.m} marginals, got {len(self.marginals)}"
            )

    @property
    def m(self) -> int:
        return self.family.m

    def marginal_cdf_vector(self, P: Sequence[float]) -> np.ndarray:
        # F clamps to 0/1 outside supports: a cutoff at the lower bound
        # rejects nobody, one above the upper bound rejects everyone.
        return np.array([mg.cdf(p) for mg, p in zip(self.marginals, P)])

    def below_cutoff_batch(self, subsets: Sequence[Sequence[int]],
                           P: Sequence[float]) -> np.ndarray:
        """Pr(scores below cutoffs on each subset) for many subsets at once."""
        F = self.marginal_cdf_vector(P)
        U = np.ones((len(subsets), self.m))
        for r, S in enumerate(subsets):
            for i in S:
                U[r, i] = F[i]
        return copula_cdf_batch(self.family, self.theta, U)


def below_cutoff_probability(model: GroupScoreModel, colleges: Sequence[int],
                             P: Sequence[float]) -> float:
    """Pr(W^i < P^i for every i in the subset); empty subset gives 1."""
    S = sorted(set(int(i) for i in colleges))
    if any(i < 0 or i >= model.m for i in S):
        raise InputError("college indices out of range")
    return float(model.below_cutoff_batch([S], P)[0])


def demand_set_probability(model: GroupScoreModel, sigma: Sequence[int], k: int,
                           P: Sequence[float]) -> float:
    """Pr(below cutoffs at the first k-1 choices, at or above at choice k)."""
    s = validate_preference_list(sigma, model.m)
    if not 1 <= k <= model.m:
        raise InputError(f"rank k must lie in 1..{model.m}")
    vals = model.below_cutoff_batch([s[: k - 1], s[:k]], P)
    return max(0.0, float(vals[0] - vals[1]))


def fosd_check(model_a: GroupScoreModel, model_b: GroupScoreModel) -> bool:
    """True iff every marginal of a strictly dominates b's on a quantile grid.

    The grid takes 99 interior quantiles of the pooled distribution at each
    college; dominance means F_a < F_b at every grid point.
    """
    if model_a.m != model_b.m:
        raise InputError("models must share the market dimension")
    qs = np.arange(1, 100) / 100.0
    for ma, mb in zip(model_a.marginals, model_b.marginals):
        for q in qs:
            x = 0.5 * (ma.ppf(q) + mb.ppf(q))
            if not ma.cdf(x) < mb.cdf(x):
                return False
    return True
