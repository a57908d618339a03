"""Design matrices for spline, change-point and periodic seasonal curves.

The regression function is a degree-P spline with at most one free knot per
interval of a fixed partition of the x-range.  A binary vector z says which
intervals currently contribute a knot column; the knot locations gamma move
continuously inside their intervals.  Everything downstream (the samplers,
the estimators) works off the dense design matrix of the active model.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dgeqrf, dorgqr, dormqr


class RankDeficiencyError(ValueError):
    """Active design matrix is numerically rank deficient."""


@dataclass
class Dataset:
    """Paired regression observations (x_i, y_i)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if self.x.size < 1:
            raise ValueError("need at least one observation")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("x values must be finite")

    @property
    def n(self) -> int:
        return self.x.size

    @cached_property
    def sort_index(self) -> np.ndarray:
        return np.argsort(self.x, kind="stable")

    @property
    def x_range(self) -> tuple[float, float]:
        return float(self.x.min()), float(self.x.max())


@dataclass(frozen=True)
class IntervalPartition:
    """Ordered disjoint half-open intervals [lower_k, upper_k) hosting knots."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.ndim != 1 or self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if self.lower.size < 1:
            raise ValueError("need at least one interval")
        if not np.all(self.lower < self.upper):
            raise ValueError("each interval needs lower < upper")
        if np.any(self.upper[:-1] > self.lower[1:]):
            raise ValueError("intervals must be ordered and non-overlapping")

    @classmethod
    def from_bounds(cls, bounds) -> "IntervalPartition":
        b = np.asarray(bounds, dtype=float)
        if b.size < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("bounds must be strictly increasing with >= 2 entries")
        return cls(b[:-1], b[1:])

    @property
    def k_max(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @cached_property
    def log_uniform_density(self) -> float:
        """Log-density of the product-uniform knot prior (constant in gamma)."""
        return -float(np.sum(np.log(self.widths)))

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, gamma: np.ndarray) -> np.ndarray:
        g = np.asarray(gamma, dtype=float)
        return (g >= self.lower) & (g < self.upper)

    def sample_gamma(self, rng: np.random.Generator, k: int | None = None):
        """Uniform draw inside interval k, or inside all intervals when k is None."""
        if k is None:
            return rng.uniform(self.lower, self.upper)
        return float(rng.uniform(self.lower[k], self.upper[k]))


@dataclass
class KnotState:
    """Sampler state: inclusion bits z and knot locations gamma, one per interval."""

    z: np.ndarray
    gamma: np.ndarray
    partition: IntervalPartition

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.uint8)
        self.gamma = np.asarray(self.gamma, dtype=float)
        k = self.partition.k_max
        if self.z.shape != (k,) or self.gamma.shape != (k,):
            raise ValueError("z and gamma must match the partition size")
        if not np.all(self.partition.contains(self.gamma)):
            raise ValueError("every gamma_k must lie in its interval")

    @classmethod
    def _trusted(cls, z: np.ndarray, gamma: np.ndarray, partition: IntervalPartition) -> "KnotState":
        """Construct without re-validation; for mutators that preserve the invariants."""
        obj = object.__new__(cls)
        obj.z = z
        obj.gamma = gamma
        obj.partition = partition
        return obj

    @property
    def size(self) -> int:
        """Number of active knots |z|."""
        return int(self.z.sum())

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.z)

    def active_gammas(self) -> np.ndarray:
        return self.gamma[self.z.astype(bool)]

    def with_z(self, z: np.ndarray) -> "KnotState":
        return KnotState(np.asarray(z, dtype=np.uint8).copy(), self.gamma.copy(), self.partition)

    def with_gamma(self, k: int, value: float) -> "KnotState":
        if not (self.partition.lower[k] <= value < self.partition.upper[k]):
            raise ValueError("gamma_k must lie in its interval")
        g = self.gamma.copy()
        g[k] = value
        return KnotState._trusted(self.z.copy(), g, self.partition)

    def flipped(self, k: int) -> "KnotState":
        z = self.z.copy()
        z[k] ^= 1
        return KnotState._trusted(z, self.gamma.copy(), self.partition)

    def swapped(self, i: int, j: int) -> "KnotState":
        z = self.z.copy()
        z[i], z[j] = z[j], z[i]
        return KnotState._trusted(z, self.gamma.copy(), self.partition)

    def copy(self) -> "KnotState":
        return KnotState._trusted(self.z.copy(), self.gamma.copy(), self.partition)


RANK_TOL = 1e-10


@dataclass
class DesignMatrix:
    """Dense active design with a lazily cached thin QR factorization.

    The factorization is held in LAPACK compact form (Householder reflectors
    plus R); Q is applied implicitly, which is all the samplers need.
    """

    values: np.ndarray
    column_labels: list
    basis_used: str = "truncated_power"
    _fac: tuple | None = field(default=None, repr=False)
    _r: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def factor(self):
        """Compact QR of the design; raises RankDeficiencyError on tiny R diagonals."""
        if self._fac is None:
            if self.m > self.n:
                raise RankDeficiencyError(f"more columns than rows ({self.m} > {self.n})")
            qrf, tau, _, info = dgeqrf(self.values)
            if info != 0:
                raise RankDeficiencyError(f"QR factorization failed (info={info})")
            diag = np.abs(qrf.diagonal()[: self.m])
            if diag.size and diag.min() < RANK_TOL * max(diag.max(), 1e-300):
                raise RankDeficiencyError(
                    f"design is rank deficient (m={self.m}, "
                    f"min|r_ii|/max={diag.min() / max(diag.max(), 1e-300):.2e})"
                )
            self._fac = (qrf, tau)
        return self._fac

    def apply_qt(self, y: np.ndarray) -> np.ndarray:
        """First m entries of Q'y (coordinates of y in the column space)."""
        qrf, tau = self.factor()
        qty, _, info = dormqr("L", "T", qrf, tau, y.reshape(-1, 1).copy(), max(3 * self.m, 64))
        if info != 0:
            raise RankDeficiencyError(f"applying Q' failed (info={info})")
        return qty[: self.m, 0]

    def r_matrix(self) -> np.ndarray:
        """Upper-triangular factor R with X = QR."""
        if self._r is None:
            qrf, _ = self.factor()
            self._r = np.triu(qrf[: self.m, :])
        return self._r

    def q_matrix(self) -> np.ndarray:
        """Explicit thin orthonormal factor (tests and one-off diagnostics)."""
        qrf, tau = self.factor()
        q, _, info = dorgqr(qrf[:, : self.m].copy(), tau)
        if info != 0:
            raise RankDeficiencyError(f"forming Q failed (info={info})")
        return q

    def least_squares(self, y: np.ndarray) -> np.ndarray:
        return solve_triangular(self.r_matrix(), self.apply_qt(y), lower=False)

    def gram_logdet(self) -> float:
        """log det(X'X) from the triangular factor."""
        qrf, _ = self.factor()
        return 2.0 * float(np.sum(np.log(np.abs(qrf.diagonal()[: self.m]))))


# reusable [1, x, ..., x^P] blocks keyed by the x array's identity; arrays fed
# to the samplers are treated as immutable, so identity is a safe cache key
_POLY_CACHE: dict = {}


def _poly_block(x: np.ndarray, degree: int) -> np.ndarray:
    key = (id(x), degree)
    hit = _POLY_CACHE.get(key)
    if hit is not None and hit[0]() is x:
        return hit[1]
    block = np.empty((x.size, degree + 1))
    block[:, 0] = 1.0
    for j in range(1, degree + 1):
        np.multiply(block[:, j - 1], x, out=block[:, j])
    if len(_POLY_CACHE) > 16:
        _POLY_CACHE.clear()
    try:
        _POLY_CACHE[key] = (weakref.ref(x), block)
    except TypeError:
        pass  # non-weakref-able views are just not cached
    return block


def truncated_power_design(x, degree: int, state: KnotState) -> DesignMatrix:
    """Columns [1, x, ..., x^P] then (x - gamma_k)_+^P for each active k."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    x = np.asarray(x, dtype=float)
    active = state.active
    values = np.empty((x.size, degree + 1 + active.size))
    values[:, : degree + 1] = _poly_block(x, degree)
    labels = [("poly", j) for j in range(degree + 1)]
    for i, k in enumerate(active):
        col = values[:, degree + 1 + i]
        np.subtract(x, state.gamma[k], out=col)
        np.maximum(col, 0.0, out=col)
        if degree > 1:
            np.power(col, degree, out=col)
        labels.append(("knot", int(k)))
    return DesignMatrix(values, labels, basis_used="truncated_power")


def bspline_design(x, degree: int, state: KnotState, x_range=None) -> DesignMatrix:
    """B-spline basis spanning the same space as the truncated-power design.

    Clamped knot vector over [a, b] with the active gammas as interior knots;
    dimension P + 1 + |z|.  Raises when the knot configuration degenerates.
    """
    x = np.asarray(x, dtype=float)
    if x_range is None:
        a, b = float(x.min()), float(x.max())
    else:
        a, b = map(float, x_range)
    interior = np.sort(state.active_gammas())
    if interior.size and (interior.min() <= a or interior.max() >= b):
        raise RankDeficiencyError("active knots must lie strictly inside the x-range")
    if interior.size > 1 and np.any(np.diff(interior) <= 0):
        raise RankDeficiencyError("duplicate interior knots degenerate the basis support")
    t = np.r_[np.full(degree + 1, a), interior, np.full(degree + 1, b)]
    xc = np.clip(x, a, b)  # guard fp dust just outside the clamped ends
    values = BSpline.design_matrix(xc, t, degree).toarray()
    labels = [("bspline", i) for i in range(values.shape[1])]
    return DesignMatrix(values, labels, basis_used="bspline")


def changepoint_design(x, state: KnotState) -> DesignMatrix:
    """Columns [1, x] then (-1 + x/gamma_k)_+ for active k (segmented log-linear model)."""
    x = np.asarray(x, dtype=float)
    cols = [np.ones_like(x), x]
    labels = [("poly", 0), ("poly", 1)]
    for k in state.active:
        g = state.gamma[k]
        if g == 0.0:
            raise ZeroDivisionError("change-point location gamma_k must be nonzero")
        cols.append(np.maximum(-1.0 + x / g, 0.0))
        labels.append(("knot", int(k)))
    return DesignMatrix(np.column_stack(cols), labels, basis_used="changepoint")


def periodic_linear_design(t, state: KnotState, period: float = 366.0) -> DesignMatrix:
    """First-order periodic basis with matching value and slope at 0 and `period`.

    The raw curve a0 + a1*t + sum_k eta_k (t - g_k)_+ loses two degrees of
    freedom to the continuity constraints, leaving an intercept plus |z| - 1
    free knot coefficients.  With fewer than two active knots the constraints
    force a constant, so the design reduces to the intercept column.
    """
    t = np.asarray(t, dtype=float)
    active = state.active
    if active.size < 2:
        return DesignMatrix(np.ones((t.size, 1)), [("intercept",)], basis_used="periodic")
    g = state.gamma[active]
    order = np.argsort(g)
    g = g[order]
    ks = active[order]
    g_last = g[-1]
    cols = [np.ones_like(t)]
    labels = [("intercept",)]
    tail = np.maximum(t - g_last, 0.0)
    for gk, k in zip(g[:-1], ks[:-1]):
        cols.append(np.maximum(t - gk, 0.0) - tail - t * (g_last - gk) / period)
        labels.append(("knot", int(k)))
    return DesignMatrix(np.column_stack(cols), labels, basis_used="periodic")


def periodic_full_coefficients(free_beta, state: KnotState, period: float = 366.0):
    """Expand free periodic coefficients to (a0, a1, eta_1..eta_K).

    Inverts the constraint elimination of periodic_linear_design: the last
    eta balances the others and a1 absorbs the endpoint-value constraint.
    """
    free_beta = np.asarray(free_beta, dtype=float)
    active = state.active
    if active.size < 2:
        return float(free_beta[0]), 0.0, np.zeros(active.size)
    g = np.sort(state.gamma[active])
    eta = np.empty(active.size)
    eta[:-1] = free_beta[1:]
    eta[-1] = -eta[:-1].sum()
    a1 = -float(np.sum(eta * (1.0 - g / period)))
    return float(free_beta[0]), a1, eta


CLAMP_FRACTION = 0.02


def default_intervals(data: Dataset, strategy: str, *, n_x: int | None = None,
                      k_max: int | None = None, bounds=None) -> IntervalPartition:
    """Build the knot-interval partition.

    every_nx:     boundaries at every n_x-th sorted distinct x value, ends
                  clamped to min+eps / max-eps with eps = 2% of the range.
    equal_count:  k_max equal-width intervals over the clamped range.
    explicit:     user bounds taken verbatim.
    """
    lo, hi = data.x_range
    eps = CLAMP_FRACTION * (hi - lo)
    if strategy == "explicit":
        if bounds is None:
            raise ValueError("explicit strategy needs bounds")
        return IntervalPartition.from_bounds(bounds)
    if strategy == "equal_count":
        if not k_max or k_max < 1:
            raise ValueError("equal_count strategy needs k_max >= 1")
        return IntervalPartition.from_bounds(np.linspace(lo + eps, hi - eps, k_max + 1))
    if strategy == "every_nx":
        if not n_x or n_x < 2:
            raise ValueError("every_nx strategy needs n_x >= 2")
        distinct = np.unique(data.x)
        if distinct.size < n_x + 1:
            raise ValueError("fewer distinct x values than required boundaries")
        interior = distinct[n_x - 1 :: n_x]  # every n_x-th sorted distinct value
        interior = interior[(interior > lo + eps) & (interior < hi - eps)]
        return IntervalPartition.from_bounds(np.r_[lo + eps, interior, hi - eps])
    raise ValueError(f"unknown interval strategy {strategy!r}")


@dataclass(frozen=True)
class DesignBuilder:
    """Builds designs of a fixed family for arbitrary evaluation points.

    The same builder instance serves the sampler (x = data) and the
    estimators (x = plotting grid), so fitted coefficients always multiply a
    consistent basis.  With auto_fallback the truncated-power family retries
    as a B-spline basis of the identical column space when the factorization
    reports rank deficiency (small-n clustered-knot instability).
    """

    kind: str = "truncated_power"
    degree: int = 3
    x_range: tuple[float, float] | None = None
    period: float = 366.0
    auto_fallback: bool = True

    def build(self, x, state: KnotState, force_kind: str | None = None) -> DesignMatrix:
        kind = force_kind or self.kind
        if kind == "truncated_power":
            design = truncated_power_design(x, self.degree, state)
            if self.auto_fallback and state.size > 0:
                try:
                    design.factor()
                except RankDeficiencyError:
                    design = self.build(x, state, force_kind="bspline")
            return design
        if kind == "bspline":
            return bspline_design(x, self.degree, state, x_range=self.x_range)
        if kind == "changepoint":
            return changepoint_design(x, state)
        if kind == "periodic":
            return periodic_linear_design(x, state, period=self.period)
        raise ValueError(f"unknown basis kind {kind!r}")
