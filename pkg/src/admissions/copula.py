"""Parameterized m-dimensional copula families.

Provides CDF evaluation, axis-aligned box probabilities, seeded sampling,
and rank-correlation diagnostics.  Gaussian CDF values come from fixed-node
quadrature so that repeated calls are bit-identical; all routines are pure
functions of their arguments.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import kendalltau, spearmanr

from .errors import CapabilityError, ConstructionError, DomainError, InputError

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ParamDomain:
    """Real interval of admissible copula parameters, endpoints possibly open."""

    lo: float
    hi: float
    lo_open: bool = True
    hi_open: bool = True
    exclude_zero: bool = False

    def contains(self, theta: float) -> bool:
        if not math.isfinite(theta):
            return False
        if self.exclude_zero and theta == 0.0:
            return False
        above = theta > self.lo if self.lo_open else theta >= self.lo
        below = theta < self.hi if self.hi_open else theta <= self.hi
        return above and below

    def describe(self) -> str:
        lb = "(" if self.lo_open else "["
        rb = ")" if self.hi_open else "]"
        core = f"{lb}{self.lo}, {self.hi}{rb}"
        return core + (" \\ {0}" if self.exclude_zero else "")


class Copula:
    """Base interface: kind, dimension m, parameter domain, CDF and sampling."""

    kind: str
    m: int
    domain: ParamDomain

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        raise CapabilityError(f"{self.kind} copula does not support sampling")


def _reduce_rows(U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Rows containing a zero coordinate have zero mass below them (grounded);
    # coordinates at one marginalize out.
    zero_mask = (U <= 0.0).any(axis=1)
    return zero_mask, U


# ----------------------------------------------------------------------------
# Gaussian machinery
# ----------------------------------------------------------------------------

_GL12 = np.polynomial.legendre.leggauss(12)
_GL32 = np.polynomial.legendre.leggauss(32)


def _bvn_cdf(h: np.ndarray, k: np.ndarray, rho: float) -> np.ndarray:
    """P(X <= h, Y <= k) for standard bivariate normal with correlation rho.

    Tetrachoric integral with the sin substitution,
    Phi2 = Phi(h)Phi(k) + (1/2pi) int_0^{asin rho} exp(-q(t)) dt,
    q(t) = (h^2 + k^2 - 2 h k sin t) / (2 cos^2 t),
    evaluated by panelized Gauss-Legendre; finite h, k only.
    """
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    base = ndtr(h) * ndtr(k)
    if rho == 0.0:
        return base
    a = math.asin(rho)
    npan = max(1, math.ceil(abs(a) / 0.4))
    nodes, weights = _GL32
    acc = np.zeros(np.broadcast(h, k).shape)
    h2k2 = h * h + k * k
    hk2 = 2.0 * h * k
    for p in range(npan):
        lo = a * p / npan
        hi = a * (p + 1) / npan
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        t = mid + half * nodes
        st = np.sin(t)
        c2 = np.cos(t) ** 2
        ex = np.exp(-(h2k2[..., None] - hk2[..., None] * st) / (2.0 * c2))
        acc = acc + half * (ex @ weights)
    return base + acc / (2.0 * math.pi)


@functools.lru_cache(maxsize=256)
def _one_factor_rule(theta: float) -> tuple[np.ndarray, np.ndarray]:
    # Nodes/weights for integrating f(z) phi(z) dz over [-8.5, 8.5]; panel
    # width tracks the sigmoid scale sqrt(1-theta)/sqrt(theta) so steep
    # integrands near theta = 1 stay resolved.
    s = math.sqrt(theta)
    width = 0.5 if s == 0.0 else min(0.5, 2.5 * math.sqrt(1.0 - theta) / s)
    npan = int(math.ceil(17.0 / width))
    nodes, weights = _GL12
    edges = np.linspace(-8.5, 8.5, npan + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halves = 0.5 * np.diff(edges)
    z = (mids[:, None] + halves[:, None] * nodes[None, :]).ravel()
    w = (halves[:, None] * weights[None, :]).ravel()
    w = w * np.exp(-0.5 * z * z) / _SQRT2PI
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def _equicorr_onefactor_cdf(theta: float, B: np.ndarray) -> np.ndarray:
    """Equicorrelated normal CDF rows via the one-factor reduction, theta in [0, 1).

    B holds normal quantiles; +inf entries marginalize out.  Valid because
    X_i = sqrt(theta) Z + sqrt(1-theta) eps_i has the target correlation.
    """
    if theta < 1e-14:
        return np.prod(ndtr(B), axis=1)
    z, w = _one_factor_rule(theta)
    s = math.sqrt(theta)
    t = math.sqrt(1.0 - theta)
    A = (B[:, None, :] - s * z[None, :, None]) / t
    return np.einsum("nz,z->n", np.prod(ndtr(A), axis=2), w)


@functools.lru_cache(maxsize=8)
def _tanh_sinh_rule(nhalf: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    # Double-exponential nodes/weights on (0, 1); resolves the endpoint
    # derivative singularity of ndtri that defeats plain Gauss-Legendre.
    k = np.arange(-nhalf, nhalf + 1)
    t = 0.5 * math.pi * np.sinh(k * h)
    x = 0.5 * (np.tanh(t) + 1.0)
    w = 0.25 * h * math.pi * np.cosh(k * h) / np.cosh(t) ** 2
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _genz_cdf(b: np.ndarray, corr: np.ndarray, nhalf: int, h: float) -> float:
    """Normal CDF P(X <= b) by sequential conditioning, tensor tanh-sinh.

    Variables are processed in ascending order of b; the transformed
    integrand lives on the open unit cube of dimension m-1.
    """
    order = np.argsort(b, kind="stable")
    b = b[order]
    corr = corr[np.ix_(order, order)]
    try:
        L = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise DomainError("correlation matrix is not positive definite") from exc
    m = len(b)
    x01, w01 = _tanh_sinh_rule(nhalf, h)
    grids = np.meshgrid(*([x01] * (m - 1)), indexing="ij")
    weight = functools.reduce(np.multiply.outer, [w01] * (m - 1))
    e0 = float(ndtr(b[0] / L[0, 0]))
    f = np.full(grids[0].shape, e0)
    prev_e = f
    ys: list[np.ndarray] = []
    for i in range(1, m):
        yi = ndtri(np.clip(grids[i - 1] * prev_e, 1e-300, 1.0 - 1e-16))
        ys.append(yi)
        num = b[i] - sum(L[i, j] * ys[j] for j in range(i))
        ei = ndtr(num / L[i, i])
        f = f * ei
        prev_e = ei
    return float(np.sum(f * weight))


def _equicorr_matrix(m: int, theta: float) -> np.ndarray:
    g = np.full((m, m), theta)
    np.fill_diagonal(g, 1.0)
    return g


def _gaussian_cdf_rows(U: np.ndarray, corr_of: Callable[[tuple[int, ...]], np.ndarray],
                       equicorr_theta: float | None) -> np.ndarray:
    """Dispatch rows of U by active-coordinate count.

    corr_of(active_index_tuple) returns the correlation submatrix; when
    equicorr_theta is not None and non-negative the one-factor path handles
    every row with 3+ active coordinates in one vectorized call.
    """
    n, m = U.shape
    out = np.ones(n)
    zero_mask = (U <= 0.0).any(axis=1)
    out[zero_mask] = 0.0
    live = ~zero_mask
    if not live.any():
        return out
    active = U < 1.0
    counts = active.sum(axis=1)
    idx1 = live & (counts == 1)
    if idx1.any():
        rows = np.where(idx1)[0]
        out[rows] = U[rows, :][active[rows, :]]
    idx2 = live & (counts == 2)
    if idx2.any():
        rows = np.where(idx2)[0]
        # group rows by which pair is active so each pair evaluates in batch
        pair_keys = [tuple(np.where(active[r])[0]) for r in rows]
        for pair in sorted(set(pair_keys)):
            sel = np.array([r for r, key in zip(rows, pair_keys) if key == pair])
            rho = float(corr_of(pair)[0, 1])
            h = ndtri(U[sel, pair[0]])
            k = ndtri(U[sel, pair[1]])
            if abs(rho) >= 1.0 - 1e-12:
                if rho > 0:
                    out[sel] = np.minimum(ndtr(h), ndtr(k))
                else:
                    out[sel] = np.maximum(ndtr(h) + ndtr(k) - 1.0, 0.0)
            else:
                out[sel] = _bvn_cdf(h, k, rho)
    idxhi = live & (counts >= 3)
    if idxhi.any():
        rows = np.where(idxhi)[0]
        if equicorr_theta is not None and equicorr_theta >= 0.0:
            B = ndtri(np.clip(U[rows], 0.0, 1.0))  # u = 1 maps to +inf and drops out
            out[rows] = _equicorr_onefactor_cdf(equicorr_theta, B)
        else:
            for r in rows:
                cols = tuple(np.where(active[r])[0])
                bb = ndtri(U[r, list(cols)])
                nhalf, h = (30, 0.11) if len(cols) == 3 else (20, 0.16)
                out[r] = _genz_cdf(bb, corr_of(cols), nhalf, h)
    return np.clip(out, 0.0, 1.0)


# ----------------------------------------------------------------------------
# Families
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianEquicorrelated(Copula):
    """Gaussian copula with unit-diagonal, constant off-diagonal correlation."""

    m: int
    kind: str = field(default="gaussian-equicorrelated", init=False)

    def __post_init__(self):
        if self.m < 2:
            raise ConstructionError("dimension must be at least 2")

    @property
    def domain(self) -> ParamDomain:
        return ParamDomain(-1.0 / (self.m - 1), 1.0)

    def corr(self, theta: float) -> np.ndarray:
        return _equicorr_matrix(self.m, theta)

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        def corr_of(cols: tuple[int, ...]) -> np.ndarray:
            return _equicorr_matrix(len(cols), theta)

        return _gaussian_cdf_rows(U, corr_of, theta)

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        L = np.linalg.cholesky(self.corr(theta))
        Z = rng.standard_normal((n, self.m))
        return ndtr(Z @ L.T)


@dataclass(frozen=True)
class GaussianCorrelationMap(Copula):
    """Gaussian copula whose full correlation matrix is a function of theta.

    Every pairwise entry must be non-decreasing in theta for comparative
    statics to apply; that is the caller's contract, not checked here.
    """

    m: int
    corr_map: Callable[[float], np.ndarray]
    domain: ParamDomain = field(default_factory=lambda: ParamDomain(-1.0, 1.0))
    kind: str = field(default="gaussian-custom-correlation-map", init=False)

    def corr(self, theta: float) -> np.ndarray:
        g = np.asarray(self.corr_map(theta), dtype=float)
        if g.shape != (self.m, self.m) or not np.allclose(g, g.T, atol=1e-12):
            raise InputError("correlation map must return a symmetric m x m matrix")
        if not np.allclose(np.diag(g), 1.0, atol=1e-12):
            raise InputError("correlation matrix must have unit diagonal")
        return g

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        g = self.corr(theta)
        try:
            np.linalg.cholesky(g)  # surfaces non-PD matrices early
        except np.linalg.LinAlgError as exc:
            raise DomainError("correlation matrix is not positive definite") from exc

        def corr_of(cols: tuple[int, ...]) -> np.ndarray:
            return g[np.ix_(cols, cols)]

        return _gaussian_cdf_rows(U, corr_of, None)

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        L = np.linalg.cholesky(self.corr(theta))
        Z = rng.standard_normal((n, self.m))
        return ndtr(Z @ L.T)


@dataclass(frozen=True)
class Independence(Copula):
    m: int
    kind: str = field(default="independence", init=False)
    domain: ParamDomain = field(default_factory=lambda: ParamDomain(-math.inf, math.inf))

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        return np.prod(U, axis=1)

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.random((n, self.m))


@dataclass(frozen=True)
class Comonotone(Copula):
    m: int
    kind: str = field(default="comonotone", init=False)
    domain: ParamDomain = field(default_factory=lambda: ParamDomain(-math.inf, math.inf))

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        return np.min(U, axis=1)

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        v = rng.random(n)
        return np.tile(v[:, None], (1, self.m))


@dataclass(frozen=True)
class Clayton(Copula):
    kind: str = field(default="clayton", init=False)
    m: int = field(default=2, init=False)
    domain: ParamDomain = field(default_factory=lambda: ParamDomain(0.0, math.inf))

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        u, v = U[:, 0], U[:, 1]
        out = np.zeros(len(U))
        pos = (u > 0.0) & (v > 0.0)
        # log-sum-exp keeps u^-theta + v^-theta - 1 finite for large theta
        a = -theta * np.log(u[pos])
        b = -theta * np.log(v[pos])
        hi = np.maximum(a, b)
        log_t = hi + np.log(np.exp(a - hi) + np.exp(b - hi) - np.exp(-hi))
        out[pos] = np.exp(-log_t / theta)
        return out

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        # gamma frailty: U_i = (1 + E_i / V)^(-1/theta), V ~ Gamma(1/theta)
        rng = np.random.default_rng(seed)
        V = rng.gamma(1.0 / theta, size=n)
        E = rng.exponential(size=(n, 2))
        return np.exp(-np.log1p(E / V[:, None]) / theta)


@dataclass(frozen=True)
class Frank(Copula):
    kind: str = field(default="frank", init=False)
    m: int = field(default=2, init=False)
    domain: ParamDomain = field(
        default_factory=lambda: ParamDomain(-math.inf, math.inf, exclude_zero=True)
    )

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        u, v = U[:, 0], U[:, 1]
        num = np.expm1(-theta * u) * np.expm1(-theta * v)
        den = math.expm1(-theta)
        return -np.log1p(num / den) / theta

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        # conditional inversion of the second coordinate given the first
        rng = np.random.default_rng(seed)
        u = rng.random(n)
        p = rng.random(n)
        den = p + (1.0 - p) * np.exp(-theta * u)
        v = -np.log1p(p * math.expm1(-theta) / den) / theta
        return np.column_stack([u, np.clip(v, 0.0, 1.0)])


@dataclass(frozen=True)
class Gumbel(Copula):
    kind: str = field(default="gumbel", init=False)
    m: int = field(default=2, init=False)
    domain: ParamDomain = field(
        default_factory=lambda: ParamDomain(1.0, math.inf, lo_open=False)
    )

    def cdf_batch(self, theta: float, U: np.ndarray) -> np.ndarray:
        u, v = U[:, 0], U[:, 1]
        out = np.zeros(len(U))
        pos = (u > 0.0) & (v > 0.0)
        a = (-np.log(u[pos])) ** theta
        b = (-np.log(v[pos])) ** theta
        out[pos] = np.exp(-((a + b) ** (1.0 / theta)))
        return out

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        # positive-stable frailty, Chambers-Mallows-Stuck generator
        rng = np.random.default_rng(seed)
        if theta == 1.0:
            return rng.random((n, 2))
        alpha = 1.0 / theta
        W = rng.uniform(0.0, math.pi, size=n)
        Ew = rng.exponential(size=n)
        V = (np.sin(alpha * W) / np.sin(W) ** (1.0 / alpha)) * (
            np.sin((1.0 - alpha) * W) / Ew
        ) ** ((1.0 - alpha) / alpha)
        E = rng.exponential(size=(n, 2))
        return np.exp(-((E / V[:, None]) ** alpha))


# Constructors keyed by family-kind string (config loading uses this).
def make_family(kind: str, m: int,
                corr_map: Callable[[float], np.ndarray] | None = None) -> Copula:
    if kind == "gaussian-equicorrelated":
        return GaussianEquicorrelated(m)
    if kind == "gaussian-custom-correlation-map":
        if corr_map is None:
            raise ConstructionError("gaussian-custom-correlation-map needs corr_map")
        return GaussianCorrelationMap(m, corr_map)
    if kind == "independence":
        return Independence(m)
    if kind == "comonotone":
        return Comonotone(m)
    if kind in ("clayton", "frank", "gumbel"):
        if m != 2:
            raise CapabilityError(f"{kind} copula is implemented for m = 2 only")
        return {"clayton": Clayton, "frank": Frank, "gumbel": Gumbel}[kind]()
    raise ConstructionError(f"unknown copula family kind: {kind}")


def effective_family(family: Copula, theta: float) -> tuple[Copula, float]:
    """Route the gaussian theta = 1 endpoint to the comonotone family."""
    if family.kind.startswith("gaussian") and theta == 1.0:
        return Comonotone(family.m), 0.0
    return family, theta


# ----------------------------------------------------------------------------
# Public operations
# ----------------------------------------------------------------------------

def _validate_theta(family: Copula, theta: float) -> None:
    if not family.domain.contains(theta):
        raise DomainError(
            f"theta = {theta} outside {family.kind} domain {family.domain.describe()}"
        )


def _validate_points(U: np.ndarray, m: int) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[None, :]
    if U.shape[1] != m:
        raise InputError(f"points must have {m} coordinates")
    if not np.isfinite(U).all() or (U < 0.0).any() or (U > 1.0).any():
        raise InputError("point coordinates must be finite and inside [0, 1]")
    return U


def copula_cdf(family: Copula, theta: float, u) -> float:
    """H_theta(u) for a single point u in [0, 1]^m."""
    family, theta = effective_family(family, theta)
    _validate_theta(family, theta)
    U = _validate_points(u, family.m)
    return float(family.cdf_batch(theta, U)[0])


def copula_cdf_batch(family: Copula, theta: float, U: np.ndarray) -> np.ndarray:
    """Vectorized H_theta over rows of U; validates once."""
    family, theta = effective_family(family, theta)
    _validate_theta(family, theta)
    U = _validate_points(U, family.m)
    return family.cdf_batch(theta, U)


def copula_box_probability(family: Copula, theta: float, lower, upper) -> float:
    """Mass of the axis-aligned box [lower, upper] by inclusion-exclusion."""
    family, theta = effective_family(family, theta)
    _validate_theta(family, theta)
    lo = _validate_points(lower, family.m)[0]
    hi = _validate_points(upper, family.m)[0]
    if (lo > hi).any():
        raise InputError("box lower corner must not exceed the upper corner")
    m = family.m
    corners = np.empty((2 ** m, m))
    signs = np.empty(2 ** m)
    for idx, choice in enumerate(itertools.product((0, 1), repeat=m)):
        corners[idx] = np.where(np.array(choice) == 1, hi, lo)
        signs[idx] = (-1.0) ** (m - sum(choice))
    vals = family.cdf_batch(theta, corners)
    return max(0.0, float(signs @ vals))


def copula_sample(family: Copula, theta: float, n: int, seed: int) -> np.ndarray:
    """n deterministic draws from H_theta, shape (n, m)."""
    family, theta = effective_family(family, theta)
    _validate_theta(family, theta)
    if n < 1:
        raise InputError("sample count must be positive")
    return family.sample(theta, n, int(seed))


def concordance_coefficients(family: Copula, theta: float, n: int,
                             seed: int) -> tuple[float, float]:
    """Sample Spearman rho and Kendall tau for a bivariate family."""
    if family.m != 2:
        raise CapabilityError("concordance coefficients are pairwise (m = 2)")
    if n < 10_000:
        raise InputError("need at least 10^4 samples for stable rank statistics")
    pts = copula_sample(family, theta, n, seed)
    rho = float(spearmanr(pts[:, 0], pts[:, 1])[0])
    tau = float(kendalltau(pts[:, 0], pts[:, 1])[0])
    return rho, tau


