"""Market clearing: aggregate demand and the unique stable-matching cutoffs.

Demand at college i is the mass of students whose favorite college among
those whose cutoff they meet is i.  The solver finds the cutoff vector where
demand equals capacity at every full college, with non-full colleges resting
at their lower support bound.  Damped Newton does the work near the solution;
a monotone coordinate tatonnement guarantees progress when Newton stalls.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, SolverError
from .scores import GroupScoreModel

NEWTON_BUDGET = 200
SWEEP_BUDGET = 500
DEFAULT_TOL = 1e-8
_INNER_TOL = 1e-12  # converge well past the contract so symmetry survives


@functools.lru_cache(maxsize=8)
def preference_lists(m: int) -> tuple[tuple[int, ...], ...]:
    """All m! preference lists in lexicographic order (favorite first)."""
    return tuple(itertools.permutations(range(m)))


def uniform_beta(m: int) -> tuple[float, ...]:
    n = math.factorial(m)
    return (1.0 / n,) * n


@dataclass(frozen=True)
class MarketShell:
    """Market data without score models: group masses, preferences, capacities."""

    gammas: tuple[float, ...]
    betas: tuple[tuple[float, ...], ...]
    alpha: tuple[float, ...]


@dataclass(frozen=True)
class MarketSpec:
    """A continuum admissions market.

    betas[j] is group j's distribution over preference_lists(m); models[j]
    holds the group's marginals and copula.
    """

    alpha: tuple[float, ...]
    gammas: tuple[float, ...]
    betas: tuple[tuple[float, ...], ...]
    models: tuple[GroupScoreModel, ...]

    def __post_init__(self):
        m, d = len(self.alpha), len(self.gammas)
        if d == 0 or len(self.betas) != d or len(self.models) != d:
            raise ConstructionError("need one beta row and one model per group")
        if any(a <= 0.0 for a in self.alpha):
            raise ConstructionError("capacities must be positive")
        if abs(sum(self.gammas) - 1.0) > 1e-9 or any(g <= 0.0 for g in self.gammas):
            raise ConstructionError("group masses must be positive and sum to 1")
        nperm = math.factorial(m)
        for j, row in enumerate(self.betas):
            if len(row) != nperm:
                raise ConstructionError(f"beta row {j} must have {nperm} entries")
            if any(b <= 0.0 for b in row) or abs(sum(row) - 1.0) > 1e-9:
                raise ConstructionError(
                    f"beta row {j} must be strictly positive and sum to 1"
                )
        for j, model in enumerate(self.models):
            if model.m != m:
                raise ConstructionError(f"model {j} dimension differs from market")

    @property
    def m(self) -> int:
        return len(self.alpha)

    @property
    def d(self) -> int:
        return len(self.gammas)

    @property
    def constrained_capacity(self) -> bool:
        return sum(self.alpha) < 1.0

    def with_theta(self, group: int, theta: float) -> "MarketSpec":
        from .copula import Comonotone

        model = self.models[group]
        family = model.family
        # the gaussian parameter endpoint is served by the comonotone family
        if family.kind.startswith("gaussian") and theta == 1.0:
            family, theta = Comonotone(family.m), 0.0
        elif family.kind == "comonotone" and theta < 1.0:
            raise ConstructionError("cannot lower theta on a comonotone model")
        model = dataclasses.replace(model, family=family, theta=theta)
        models = tuple(
            model if j == group else mj for j, mj in enumerate(self.models)
        )
        return dataclasses.replace(self, models=models)

    def lower_bounds(self) -> np.ndarray:
        return np.array(
            [
                min(model.marginals[i].lower for model in self.models)
                for i in range(self.m)
            ],
            dtype=float,
        )

    def first_choice_mass(self) -> np.ndarray:
        perms = preference_lists(self.m)
        fc = np.zeros(self.m)
        for gamma, row in zip(self.gammas, self.betas):
            for sigma, b in zip(perms, row):
                fc[sigma[0]] += gamma * b
        return fc

    @functools.cached_property
    def _demand_plan(self):
        # Demand is a fixed linear combination of below-cutoff probabilities
        # over prefix subsets of the preference lists; precompute the
        # coefficients so each evaluation is one batched CDF call per group.
        m = self.m
        perms = preference_lists(m)
        masks: dict[frozenset, int] = {}

        def mask_index(s: frozenset) -> int:
            if s not in masks:
                masks[s] = len(masks)
            return masks[s]

        full_idx = mask_index(frozenset(range(m)))
        coeffs = []
        for row in self.betas:
            C = {}
            for sigma, b in zip(perms, row):
                for k in range(1, m + 1):
                    i = sigma[k - 1]
                    head = mask_index(frozenset(sigma[: k - 1]))
                    tail = mask_index(frozenset(sigma[:k]))
                    C[(i, head)] = C.get((i, head), 0.0) + b
                    C[(i, tail)] = C.get((i, tail), 0.0) - b
            coeffs.append(C)
        subsets = [()] * len(masks)
        for s, idx in masks.items():
            subsets[idx] = tuple(sorted(s))
        mats = []
        for C in coeffs:
            M = np.zeros((m, len(masks)))
            for (i, idx), val in C.items():
                M[i, idx] = val
            mats.append(M)
        return subsets, tuple(mats), full_idx

    def demand_and_unmatched(self, P) -> tuple[np.ndarray, np.ndarray]:
        """Aggregate demand per college and below-all-cutoffs mass per group."""
        subsets, mats, full_idx = self._demand_plan
        D = np.zeros(self.m)
        unmatched = np.zeros(self.d)
        for j, (gamma, model, M) in enumerate(zip(self.gammas, self.models, mats)):
            B = model.below_cutoff_batch(subsets, P)
            D += gamma * (M @ B)
            unmatched[j] = B[full_idx]
        return np.clip(D, 0.0, 1.0), unmatched


def aggregate_demand(spec: MarketSpec, P) -> np.ndarray:
    P = _cutoff_array(P)
    return spec.demand_and_unmatched(P)[0]


@dataclass(frozen=True)
class CutoffVector:
    """Cutoffs plus full flags; a False flag parks the cutoff at the lower bound."""

    P: tuple[float, ...]
    full: tuple[bool, ...]
    residual: float = 0.0

    @property
    def cutoffs(self) -> np.ndarray:
        return np.array(self.P, dtype=float)


def _cutoff_array(P) -> np.ndarray:
    if isinstance(P, CutoffVector):
        return P.cutoffs
    return np.asarray(P, dtype=float)


# ----------------------------------------------------------------------------
# solving
# ----------------------------------------------------------------------------

def _pooled_ppf(spec: MarketSpec, i: int, q: float) -> float:
    """Quantile of the gamma-weighted mixture of group marginals at college i."""
    los = [m.marginals[i].ppf(min(q, 1e-9)) for m in spec.models]
    his = [m.marginals[i].ppf(max(q, 1.0 - 1e-9)) for m in spec.models]
    lo, hi = min(los), max(his)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        F = sum(g * m.marginals[i].cdf(mid) for g, m in zip(spec.gammas, spec.models))
        if F < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _scales(spec: MarketSpec) -> np.ndarray:
    return np.array(
        [
            max(
                _pooled_ppf(spec, i, 0.84) - _pooled_ppf(spec, i, 0.16),
                1e-6,
            )
            for i in range(spec.m)
        ]
    )


def _finite_floor(spec: MarketSpec, lb: np.ndarray) -> np.ndarray:
    # a searchable stand-in for infinite lower bounds
    floor = lb.copy()
    for i in range(spec.m):
        if not math.isfinite(floor[i]):
            floor[i] = min(m.marginals[i].ppf(1e-13) for m in spec.models)
    return floor


def _finite_ceil(spec: MarketSpec) -> np.ndarray:
    out = np.empty(spec.m)
    for i in range(spec.m):
        ups = [m.marginals[i].upper for m in spec.models]
        if all(math.isfinite(u) for u in ups):
            out[i] = max(ups)
        else:
            out[i] = max(m.marginals[i].ppf(1.0 - 1e-13) for m in spec.models)
    return out


def _excess_capacity_applies(spec: MarketSpec) -> bool:
    a = spec.alpha
    return all(
        a[i] + a[j] >= 1.0
        for i in range(spec.m)
        for j in range(i + 1, spec.m)
    )


def _solve_excess_capacity(spec: MarketSpec, tol: float) -> CutoffVector | None:
    """Independent per-college solves valid when at most one college can fill.

    With every pairwise capacity sum at least 1, a student's demand never
    moves past their first choice, so demand at college i depends on P^i
    alone through the first-choice mass.  Verified against the full demand
    map before returning; None hands control back to the general path.
    """
    m = spec.m
    fc = spec.first_choice_mass()
    lb = spec.lower_bounds()
    floor = _finite_floor(spec, lb)
    ceil = _finite_ceil(spec)
    P = lb.copy()
    full = np.zeros(m, dtype=bool)
    for i in range(m):
        def di(x: float) -> float:
            return sum(
                g * b * (1.0 - mdl.marginals[i].cdf(x))
                for g, b, mdl in zip(
                    spec.gammas,
                    (sum(row[p] for p, s in enumerate(preference_lists(m)) if s[0] == i)
                     for row in spec.betas),
                    spec.models,
                )
            )

        if di(floor[i]) <= spec.alpha[i] + 1e-15:
            continue
        lo, hi = floor[i], ceil[i]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if di(mid) > spec.alpha[i]:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, abs(hi)):
                break
        P[i] = 0.5 * (lo + hi)
        full[i] = True
    D, _ = spec.demand_and_unmatched(P)
    ok = all(
        abs(D[i] - spec.alpha[i]) <= tol if full[i] else D[i] <= spec.alpha[i] + tol
        for i in range(m)
    )
    if not ok:
        return None
    res = float(max(abs(D[i] - spec.alpha[i]) for i in range(m) if full[i]) if full.any() else 0.0)
    return CutoffVector(tuple(float(p) for p in P), tuple(bool(f) for f in full), res)


def _market_residual(spec: MarketSpec, P: np.ndarray, alpha: np.ndarray,
                     lb: np.ndarray) -> float:
    # infinity norm of the clearing violation: full colleges need equality,
    # colleges at their bound only need demand <= capacity
    D, _ = spec.demand_and_unmatched(P)
    return float(
        max(
            abs(D[i] - alpha[i]) if P[i] > lb[i] else max(D[i] - alpha[i], 0.0)
            for i in range(len(P))
        )
    )


def _tatonnement(spec: MarketSpec, P: np.ndarray, alpha: np.ndarray,
                 lb: np.ndarray, floor: np.ndarray, ceil: np.ndarray,
                 tol: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Gauss-Seidel sweeps; each coordinate is bisected on its own residual.

    Demand at i is strictly decreasing in P^i, so the coordinate root is
    unique and the sweep map is monotone between the lattice extremes.
    """
    m = spec.m
    span = float(np.max(np.abs(ceil - floor)))
    for _ in range(SWEEP_BUDGET):
        moved = 0.0
        for i in range(m):
            def ri(x: float) -> float:
                q = P.copy()
                q[i] = x
                return float(spec.demand_and_unmatched(q)[0][i] - alpha[i])

            old = P[i] if math.isfinite(P[i]) else floor[i]
            if ri(floor[i]) <= 0.0:
                P[i] = lb[i]
                moved = max(moved, abs(old - floor[i]))
                continue
            lo, hi = floor[i], ceil[i]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if ri(mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            P[i] = 0.5 * (lo + hi)
            moved = max(moved, abs(P[i] - old))
        res = _market_residual(spec, P, alpha, lb)
        if res <= 0.01 * tol or (res <= tol and moved <= 1e-12 * span):
            break
    full = np.array([P[i] > lb[i] for i in range(m)])
    return P, full, _market_residual(spec, P, alpha, lb)


def solve_market_clearing(spec: MarketSpec, x0=None,
                          tol: float = DEFAULT_TOL) -> CutoffVector:
    """Unique cutoff vector with demand equal to capacity at full colleges.

    Raises SolverError with the achieved residual when neither Newton nor the
    tatonnement fallback reaches the tolerance within budget.
    """
    m = spec.m
    alpha = np.asarray(spec.alpha, dtype=float)
    lb = spec.lower_bounds()
    floor = _finite_floor(spec, lb)
    ceil = _finite_ceil(spec)
    scales = _scales(spec)

    shortcut = None
    if _excess_capacity_applies(spec):
        shortcut = _solve_excess_capacity(spec, tol)
        if shortcut is not None:
            return shortcut

    if x0 is not None:
        P = np.maximum(_cutoff_array(x0), lb)
        P = np.minimum(P, ceil)
        for i in range(m):
            if not math.isfinite(P[i]):
                P[i] = floor[i]
    else:
        fc = spec.first_choice_mass()
        P = np.empty(m)
        for i in range(m):
            q = 1.0 - min(0.95, alpha[i] / max(fc[i], 1e-12))
            P[i] = _pooled_ppf(spec, i, min(max(q, 0.02), 0.98))

    frozen = np.zeros(m, dtype=bool)

    def residual(Pv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        D, _ = spec.demand_and_unmatched(Pv)
        return D - alpha, D

    def block_err(Pv: np.ndarray, rv: np.ndarray, idx: np.ndarray) -> float:
        # a coordinate parked at the floor with slack demand is satisfied
        vals = [
            0.0 if (Pv[i] <= floor[i] and rv[i] < 0.0) else abs(rv[i])
            for i in idx
        ]
        return max(vals) if vals else 0.0

    r, D = residual(P)
    stalled = False
    for _ in range(NEWTON_BUDGET):
        # freeze colleges resting at the bound with slack demand; wake any
        # frozen college whose demand has overtaken its capacity
        for i in range(m):
            if frozen[i] and D[i] > alpha[i] + 1e-14:
                frozen[i] = False
                P[i] = floor[i]
            elif not frozen[i] and P[i] <= floor[i] and r[i] < 0.0:
                frozen[i] = True
                P[i] = lb[i]
        active = ~frozen
        err = max(
            (abs(r[i]) if active[i] else max(r[i], 0.0)) for i in range(m)
        )
        if err <= _INNER_TOL:
            break
        if not active.any():
            break
        idx = np.where(active)[0]
        # forward-difference Jacobian on the active block
        J = np.empty((len(idx), len(idx)))
        for col, i in enumerate(idx):
            h = 1e-6 * scales[i]
            Ph = P.copy()
            # step away from the ceiling so the difference never collapses
            Ph[i] = P[i] + h if P[i] + h <= ceil[i] else P[i] - h
            rh, _ = residual(Ph)
            J[:, col] = (rh[idx] - r[idx]) / (Ph[i] - P[i])
        try:
            step = np.linalg.solve(J, -r[idx])
        except np.linalg.LinAlgError:
            stalled = True
            break
        norm0 = block_err(P, r, idx)
        accepted = False
        for lam in (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625):
            Pn = P.copy()
            Pn[idx] = np.clip(P[idx] + lam * step, floor[idx], ceil[idx])
            rn, Dn = residual(Pn)
            errn = block_err(Pn, rn, idx)
            if errn < norm0 * (1.0 - 1e-4 * lam) or errn <= _INNER_TOL:
                P, r, D = Pn, rn, Dn
                accepted = True
                break
        if not accepted:
            stalled = True
            break
    else:
        stalled = True

    res = _market_residual(spec, P, alpha, lb)
    if stalled or res > tol:
        for i in range(m):
            if not math.isfinite(P[i]):
                P[i] = lb[i]
        P, full, res = _tatonnement(spec, P, alpha, lb, floor, ceil, tol)
        if res > tol:
            raise SolverError(
                f"market clearing stalled at residual {res:.3e}", residual=res
            )
    else:
        full = np.array([P[i] > lb[i] for i in range(m)])
    return CutoffVector(tuple(float(p) for p in P),
                        tuple(bool(f) for f in full),
                        float(res))


def solve_theta_sweep(spec: MarketSpec, group: int, grid,
                      tol: float = DEFAULT_TOL) -> list[CutoffVector]:
    """Solve along a sorted theta grid for one group, warm-starting each node."""
    grid = np.asarray(grid, dtype=float)
    out: list[CutoffVector] = []
    prev: CutoffVector | None = None
    for theta in grid:
        node = spec.with_theta(group, float(theta))
        try:
            cv = solve_market_clearing(node, x0=prev, tol=tol)
        except SolverError as exc:
            raise SolverError(str(exc), residual=exc.residual, theta=float(theta))
        out.append(cv)
        prev = cv
    return out
