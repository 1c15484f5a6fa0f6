"""Priority-class tie-breaking as a composite copula.

Each college partitions students into ordered priority classes occupying
consecutive score intervals; within the product of class intervals (a
cell) the joint tie-break law is a rescaled copy of a base copula.  The
composite is itself a copula whenever the cell-mass table is consistent
with the per-college class masses, so solver and metrics apply unchanged.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .copula import Copula, ParamDomain, effective_family
from .errors import ConstructionError, InputError
from .scores import GroupScoreModel, Uniform
from .solver import MarketShell, MarketSpec

CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class TieBreakSpec:
    """Class geometry plus the base copula for one group.

    class_masses[i][q] is the mass of college i's class q, ordered from the
    lowest score interval upward; cells maps each cell index tuple to its
    joint mass and defaults to the product table (independent membership).
    """

    class_masses: tuple[tuple[float, ...], ...]
    family: Copula
    theta: float
    cells: tuple[tuple[tuple[int, ...], float], ...] | None = None

    def __post_init__(self):
        m = len(self.class_masses)
        if m != self.family.m:
            raise ConstructionError("one class partition per college is required")
        for i, masses in enumerate(self.class_masses):
            if len(masses) == 0 or any(k <= 0.0 for k in masses):
                raise ConstructionError(
                    f"college {i} class masses must be strictly positive"
                )
            if abs(sum(masses) - 1.0) > CONSISTENCY_TOL:
                raise ConstructionError(f"college {i} class masses must sum to 1")
        shape = self.shape
        all_cells = list(itertools.product(*(range(t) for t in shape)))
        if self.cells is None:
            table = {
                p: math.prod(self.class_masses[i][q] for i, q in enumerate(p))
                for p in all_cells
            }
        else:
            raw = dict(self.cells) if not isinstance(self.cells, Mapping) else dict(self.cells)
            if set(raw) != set(all_cells):
                raise ConstructionError(
                    "cell table must cover every class combination exactly once"
                )
            if any(v < 0.0 for v in raw.values()):
                raise ConstructionError("cell masses must be non-negative")
            table = {p: float(raw[p]) for p in all_cells}
        total = sum(table.values())
        if abs(total - 1.0) > CONSISTENCY_TOL:
            raise ConstructionError("cell masses must sum to 1")
        for i in range(m):
            for q, kq in enumerate(self.class_masses[i]):
                got = sum(v for p, v in table.items() if p[i] == q)
                if abs(got - kq) > CONSISTENCY_TOL:
                    raise ConstructionError(
                        f"cell masses are inconsistent with college {i} class {q}"
                    )
        canon = tuple((p, table[p]) for p in sorted(table))
        object.__setattr__(self, "cells", canon)

    @property
    def m(self) -> int:
        return len(self.class_masses)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(masses) for masses in self.class_masses)

    @functools.cached_property
    def anchors(self) -> tuple[tuple[float, ...], ...]:
        """Per college: interval endpoints 0 = a_0 < a_1 < ... < a_tau = 1."""
        out = []
        for masses in self.class_masses:
            acc = [0.0]
            for k in masses:
                acc.append(acc[-1] + k)
            acc[-1] = 1.0
            out.append(tuple(acc))
        return tuple(out)

    @functools.cached_property
    def _tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        idx = np.array([p for p, _ in self.cells], dtype=int)
        kappa = np.array([v for _, v in self.cells])
        lower = np.empty_like(idx, dtype=float)
        width = np.empty_like(idx, dtype=float)
        for i in range(self.m):
            a = np.asarray(self.anchors[i])
            lower[:, i] = a[idx[:, i]]
            width[:, i] = np.asarray(self.class_masses[i])[idx[:, i]]
        return idx, kappa, lower, width


@dataclass(frozen=True)
class CompositeTieBreak(Copula):
    """The composite copula induced by a TieBreakSpec.

    CDF is the cell-mass mixture of the base copula evaluated on each
    cell's rescaled coordinates; the gaussian parameter endpoint stays
    admissible because the base routes to comonotone there.
    """

    tb: TieBreakSpec
    kind: str = field(default="composite-tiebreak", init=False)

    @property
    def m(self) -> int:
        return self.tb.m

    @property
    def domain(self) -> ParamDomain:
        base = self.tb.family.domain
        if self.tb.family.kind.startswith("gaussian"):
            return dataclasses.replace(base, hi_open=False)
        return base

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        base, t = effective_family(self.tb.family, theta)
        _, kappa, lower, width = self.tb._tables
        n, nc = U.shape[0], kappa.size
        scaled = np.clip((U[:, None, :] - lower[None, :, :]) / width[None, :, :], 0.0, 1.0)
        vals = base.cdf_batch(t, scaled.reshape(n * nc, self.m)).reshape(n, nc)
        return vals @ kappa

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        draws, _ = _sample_with_cells(self.tb, theta, n, seed)
        return draws


def _sample_with_cells(tb: TieBreakSpec, theta: float, n: int,
                       seed: int) -> tuple[np.ndarray, np.ndarray]:
    base, t = effective_family(tb.family, theta)
    _, kappa, lower, width = tb._tables
    cell_ss, base_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(cell_ss)
    cells = rng.choice(kappa.size, size=n, p=kappa / kappa.sum())
    V = base.sample(t, n, int(base_ss.generate_state(1)[0]))
    return lower[cells] + width[cells] * V, cells


def composite_copula_cdf(tb: TieBreakSpec, theta: float, x) -> float:
    """Joint CDF of the composite tie-break at one point of [0, 1]^m."""
    from .copula import copula_cdf

    return copula_cdf(CompositeTieBreak(tb), theta, x)


def class_dominance_check(tb: TieBreakSpec, theta: float, n: int, seed: int) -> bool:
    """True iff sampled scores order strictly across classes at every college.

    The interval construction makes this deterministic: any draw from a
    higher class must exceed every draw from a lower class.
    """
    if n < 1:
        raise InputError("sample count must be positive")
    draws, cells = _sample_with_cells(tb, theta, n, seed)
    idx, _, _, _ = tb._tables
    classes = idx[cells]
    for i in range(tb.m):
        for q in range(len(tb.class_masses[i]) - 1):
            low = draws[classes[:, i] == q, i]
            high = draws[classes[:, i] > q, i]
            if low.size and high.size and low.max() >= high.min():
                return False
    return True


def tiebreak_market(tbs: Sequence[TieBreakSpec], shell: MarketShell) -> MarketSpec:
    """Wrap per-group composite tie-breaks into a solvable market.

    Requires strictly positive mass in every cell of every group so each
    class combination is populated.
    """
    if len(tbs) != len(shell.gammas):
        raise InputError("need one tie-break construction per group")
    m = len(shell.alpha)
    for j, tb in enumerate(tbs):
        if tb.m != m:
            raise InputError(f"group {j} tie-break dimension differs from market")
        for p, v in tb.cells:
            if v <= 0.0:
                raise InputError(f"group {j} cell {p} has zero mass")
    models = tuple(
        GroupScoreModel(
            tuple(Uniform(0.0, 1.0) for _ in range(m)),
            CompositeTieBreak(tb),
            tb.theta,
        )
        for tb in tbs
    )
    return MarketSpec(alpha=shell.alpha, gammas=shell.gammas,
                      betas=shell.betas, models=models)
