"""Sequential empirical and quantile processes built exactly from a sample.

Every process here is a function of (y, t) that is constant in t on
[k/n, (k+1)/n) and piecewise polynomial in y between the order statistics
of the first k observations (and the grid j/k for quantile-type objects).
:class:`TwoParamField` keeps that structure so suprema and L_p norms can be
computed exactly rather than on a grid.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from .errors import EmptyPrefix, InvalidSpec

__all__ = [
    "SampleBatch",
    "Section",
    "TwoParamField",
    "d_norm",
    "level",
    "empirical_cdf",
    "empirical_quantile",
    "process_field",
    "sup_norm",
    "lp_norm",
]

_SNAP = 1e-9
# on the y axis the breakpoints j/k sit next to order statistics, so only
# float drift of a few thousand ulps is snapped there
_Y_SNAP = 1e-12


def d_norm(n, tau, D, L=None):
    """d_n = sqrt(n**(2 - tau D) L(n)**tau).

    Examples
    --------
    >>> round(d_norm(100, 1, 0.5), 4)
    31.6228
    """
    if tau * D >= 1 or D <= 0:
        raise InvalidSpec(f"need 0 < D < 1/tau, got tau={tau}, D={D}")
    if n < 1:
        raise InvalidSpec("n must be >= 1")
    Ln = 1.0 if L is None else float(L(n))
    return math.sqrt(n ** (2.0 - tau * D) * Ln ** tau)


def _snap(m, tol=_SNAP):
    """Snap values within a relative hair of an integer onto it."""
    r = np.round(m)
    return np.where(np.abs(m - r) <= tol * np.maximum(1.0, np.abs(r)), r, m)


def level(n, t):
    """[nt] as an exact integer (array), treating t = k/n without float drift."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    return np.floor(_snap(n * t)).astype(np.int64)


@dataclass(frozen=True)
class Section:
    """Prefix of length k: sorted U's, their cumulative sums and sorted X's."""

    k: int
    s: np.ndarray
    cs: np.ndarray
    xs: np.ndarray

    # Empirical distribution of the prefix ---------------------------------
    @property
    def ftype(self):
        return self.s.dtype.type

    def E(self, y, side="value"):
        how = "left" if side == "left" else "right"
        return np.searchsorted(self.s, y, side=how).astype(self.s.dtype) / self.k

    def U(self, y, side="value"):
        """Uniform quantile Û_k; left-continuous, with Û(0) = Û(0+)."""
        y = np.asarray(y)
        m = _snap(y * self.k, _Y_SNAP)
        right = np.clip(np.floor(m), 0, self.k - 1).astype(np.int64)
        left = np.clip(np.ceil(m) - 1, 0, self.k - 1).astype(np.int64)
        if side == "right":
            idx = right
        elif side == "left":
            idx = left
        else:
            idx = np.where(y > 0, left, right)
        return self.s[idx]

    def Xq(self, y, side="value"):
        """Sample quantile Q̂_k of the X's, same convention as :meth:`U`."""
        y = np.asarray(y, dtype=float)
        m = _snap(y * self.k, _Y_SNAP)
        right = np.clip(np.floor(m), 0, self.k - 1).astype(np.int64)
        left = np.clip(np.ceil(m) - 1, 0, self.k - 1).astype(np.int64)
        idx = right if side == "right" else left if side == "left" else np.where(y > 0, left, right)
        return self.xs[idx]

    def FX(self, x, side="value"):
        how = "left" if side == "left" else "right"
        return np.searchsorted(self.xs, x, side=how).astype(self.s.dtype) / self.k

    # Exact integrals --------------------------------------------------------
    def int_E(self, x):
        """Integral of Ê over [0, x]."""
        x = np.asarray(x, dtype=self.s.dtype)
        c = np.searchsorted(self.s, x, side="right")
        return (c * x - self.cs[c]) / self.k

    def int_U(self, x):
        """Integral of Û over [0, x]."""
        x = np.asarray(x, dtype=self.s.dtype)
        j = np.clip(np.floor(_snap(x * self.k, _Y_SNAP)), 0, self.k).astype(np.int64)
        part = np.where(j < self.k, (x - j.astype(self.s.dtype) / self.k) * self.s[np.minimum(j, self.k - 1)], 0.0)
        return self.cs[j] / self.k + part

    def breaks(self):
        return np.union1d(self.s, np.arange(1, self.k, dtype=self.s.dtype) / self.k)


class SampleBatch:
    """Chronological samples X_1..X_n and U_i = F(X_i) with prefix order statistics.

    Prefix ``k`` is extracted from a single global sort by masking ranks,
    so each prefix is O(n) and no per-prefix sort is performed.

    ``extended=True`` stores U in long double, which the exact-identity
    checks use to keep cancellation error far below their tolerance.
    """

    def __init__(self, U, X=None, *, extended=False):
        self.dtype = np.longdouble if extended else np.float64
        U = np.asarray(U, dtype=self.dtype)
        if U.ndim != 1:
            raise ValueError("U must be one-dimensional")
        if np.any((U < 0) | (U > 1)):
            raise ValueError("U values must lie in [0, 1]")
        self.U = U.copy()
        self.U.setflags(write=False)
        self.X = self.U if X is None else np.asarray(X, dtype=self.dtype).copy()
        if self.X.shape != self.U.shape:
            raise ValueError("X and U must have the same length")
        self._uorder = np.argsort(self.U, kind="stable")
        self._xorder = np.argsort(self.X, kind="stable")
        self._section = lru_cache(maxsize=64)(self._build_section)

    @classmethod
    def from_path(cls, path_values, subordination, *, extended=False):
        """Build X = G(eta) and U = F(X) computed directly from eta."""
        eta = np.asarray(path_values, dtype=float)
        return cls(subordination.pit(eta), subordination.G(eta), extended=extended)

    @property
    def n(self):
        return self.U.size

    def prefix_sorted(self, k):
        """Sorted copy of U_1..U_k."""
        return self.U[self._uorder[self._uorder < k]]

    def _build_section(self, k):
        if k < 1:
            raise EmptyPrefix("prefix of length 0 has no order statistics")
        s = self.prefix_sorted(k)
        cs = np.concatenate([np.zeros(1, dtype=s.dtype), np.cumsum(s)])
        xs = self.X[self._xorder[self._xorder < k]]
        return Section(k, s, cs, xs)

    def section(self, k):
        k = int(k)
        if not 1 <= k <= self.n:
            raise EmptyPrefix(f"prefix length {k} outside 1..{self.n}")
        return self._section(k)

    def iter_prefixes(self):
        """Yield (k, sorted prefix) for k = 1..n by incremental insertion."""
        buf = np.empty(self.n)
        for k in range(1, self.n + 1):
            v = self.U[k - 1]
            pos = np.searchsorted(buf[:k - 1], v, side="right")
            buf[pos + 1:k] = buf[pos:k - 1].copy()
            buf[pos] = v
            yield k, buf[:k]


def empirical_cdf(batch, y, t):
    """Ê_{[nt]}(y); zero when [nt] = 0."""
    k = int(level(batch.n, t))
    if k == 0:
        return 0.0
    return float(batch.section(k).E(y))


def empirical_quantile(batch, y, t):
    """Û_{[nt]}(y), the ceil(y [nt])-th order statistic of the prefix."""
    k = int(level(batch.n, t))
    if k == 0:
        raise EmptyPrefix("[nt] = 0")
    return float(batch.section(k).U(y))


class TwoParamField:
    """A process on [0,1]^2 with exact per-level structure.

    Parameters
    ----------
    name : str
    n : int
        Sample size; t-level k = [nt].
    section_fn : callable
        ``section_fn(k, y, side)`` returns values at level ``k >= 1`` for an
        array ``y``; ``side`` is ``value``, ``left`` or ``right``.
    breaks_fn : callable
        ``breaks_fn(k)`` returns the y-breakpoints at level ``k``.
    crit_fn : callable, optional
        ``crit_fn(k)`` returns interior points where the derivative in y
        vanishes (candidates for extrema inside cells).
    degree : int or None
        Polynomial degree in y within cells; ``None`` if not polynomial.
    """

    def __init__(self, name, n, section_fn, breaks_fn, crit_fn=None, degree=1,
                 dtype=np.float64):
        self.dtype = dtype
        self.name = name
        self.n = int(n)
        self._section_fn = section_fn
        self._breaks_fn = breaks_fn
        self._crit_fn = crit_fn
        self.degree = degree

    def section(self, k, y, side="value"):
        y = np.atleast_1d(np.asarray(y, dtype=self.dtype))
        if k == 0:
            return np.zeros_like(y)
        return np.asarray(self._section_fn(int(k), y, side), dtype=self.dtype)

    def breakpoints(self, k):
        return np.zeros(0) if k == 0 else np.asarray(self._breaks_fn(int(k)))

    def critical_points(self, k):
        if k == 0 or self._crit_fn is None:
            return np.zeros(0)
        return np.asarray(self._crit_fn(int(k)))

    def __call__(self, y, t, side="value"):
        y = np.asarray(y, dtype=self.dtype)
        y_b, t_b = np.broadcast_arrays(y, np.asarray(t, dtype=float))
        ks = level(self.n, t_b)
        out = np.empty(y_b.shape, dtype=self.dtype)
        for k in np.unique(ks):
            m = ks == k
            out[m] = self.section(k, y_b[m], side)
        return out[()]

    def __sub__(self, other):
        return combine(f"{self.name}-{other.name}", lambda a, b: a - b, self, other)


def combine(name, op, *fields, degree=None):
    """Pointwise combination of fields sharing n; breakpoints are merged."""
    n = fields[0].n
    dtype = fields[0].dtype
    if degree is None:
        degs = [f.degree for f in fields]
        degree = None if any(d is None for d in degs) else max(degs)
    return TwoParamField(
        name, n,
        lambda k, y, side: op(*(f.section(k, y, side) for f in fields)),
        lambda k: np.unique(np.concatenate([f.breakpoints(k) for f in fields])),
        None, degree, dtype,
    )


def _in_cells(points, breaks):
    return points[(points > 0) & (points < 1)]


def process_field(batch, which, model, F=None):
    """Build one of the sequential processes as a :class:`TwoParamField`.

    Parameters
    ----------
    batch : SampleBatch
    which : {"alpha", "u", "beta", "gamma", "rho"}
    model : mapping or object with ``d`` (the normalizer d_n)
    F : DistributionSpec, required for ``beta``, ``gamma`` and ``rho``
    """
    d = _d_of(model)
    sec = batch.section

    if which == "alpha":
        return TwoParamField("alpha", batch.n,
                             lambda k, y, side: k * (sec(k).E(y, side) - y) / d,
                             lambda k: sec(k).s, dtype=batch.dtype)
    if which == "u":
        return TwoParamField("u", batch.n,
                             lambda k, y, side: k * (y - sec(k).U(y, side)) / d,
                             lambda k: np.arange(1, k, dtype=batch.dtype) / k,
                             dtype=batch.dtype)
    if F is None:
        raise InvalidSpec(f"{which} needs a DistributionSpec")
    if which == "beta":
        def beta(k, y, side):
            with np.errstate(invalid="ignore"):
                x = F.Q(y)
            return k * (sec(k).FX(x, side) - y) / d
        return TwoParamField("beta", batch.n, beta, lambda k: sec(k).s)
    if which in ("gamma", "rho"):
        def gamma(k, y, side):
            with np.errstate(invalid="ignore", over="ignore"):
                return k * (F.Q(y) - sec(k).Xq(y, side)) / d

        if which == "gamma":
            return TwoParamField("gamma", batch.n, gamma,
                                 lambda k: np.arange(1, k) / k, degree=None)

        def rho(k, y, side):
            fq = F.fQ(y)
            g = gamma(k, y, side)
            with np.errstate(invalid="ignore"):
                return np.where(fq == 0, 0.0, fq * g)
        return TwoParamField("rho", batch.n, rho, lambda k: np.arange(1, k) / k, degree=None)
    raise InvalidSpec(f"unknown process {which!r}")


def _d_of(model):
    if isinstance(model, (int, float)):
        return float(model)
    if isinstance(model, dict):
        return float(model["d"])
    return float(model.d)


def _levels(field, t_subset):
    if t_subset is None:
        return range(1, field.n + 1)
    return sorted({int(k) for k in level(field.n, np.atleast_1d(t_subset))} - {0})


def section_sup(field, k, y_window=(0.0, 1.0)):
    """Exact sup over y in the window at level k, with its argmax."""
    lo, hi = y_window
    b = field.breakpoints(k)
    b = b[(b >= lo) & (b <= hi)]
    c = field.critical_points(k)
    c = c[(c > lo) & (c < hi)]
    pts = np.concatenate([[lo, hi], b])
    vals = np.concatenate([
        np.abs(field.section(k, pts, "right")),
        np.abs(field.section(k, pts, "left")),
        np.abs(field.section(k, c, "value")) if c.size else np.zeros(0),
    ])
    # one-sided limits at the window ends must stay inside the window
    vals[0] = abs(field.section(k, [lo], "right")[0])
    vals[1] = abs(field.section(k, [hi], "left")[0])
    vals[pts.size] = vals[0]
    vals[pts.size + 1] = vals[1]
    vals = np.where(np.isfinite(vals), vals, np.inf)
    i = int(np.argmax(vals))
    where = np.concatenate([pts, pts, c])[i]
    return float(vals[i]), float(where)


def sup_norm(field, t_subset=None, y_window=(0.0, 1.0)):
    """sup over the chosen t-levels and y-window of |field|.

    For polynomial fields with critical points supplied this is exact: the
    candidates are window ends, every breakpoint with both one-sided
    limits, and interior stationary points.  For non-polynomial fields it
    is a lower bound taken at those same candidates.
    """
    best = 0.0
    for k in _levels(field, t_subset):
        best = max(best, section_sup(field, k, y_window)[0])
    return best


def lp_norm(field, p, t_subset=None, nodes=None):
    """(int_0^1 int_0^1 |field(y, t)|^p dy dt)^(1/p), exact per cell.

    Since [nt] = k on [k/n, (k+1)/n) the t-integral is the sum over levels
    k = 0..n-1 with weight 1/n; level 0 contributes nothing.  With
    ``t_subset`` the sum runs over those levels instead.

    Each polynomial cell is split at the real roots of the polynomial and
    Gauss-Legendre with enough nodes integrates f^p exactly on each piece.
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be an integer >= 1")
    p = int(p)
    deg = field.degree if field.degree is not None else 8
    m = nodes or max(2, (deg * p) // 2 + 1)
    gx, gw = np.polynomial.legendre.leggauss(m)
    total = 0.0
    levels = _levels(field, t_subset) if t_subset is not None else range(0, field.n)
    for k in levels:
        if k == 0:
            continue
        b = np.unique(np.concatenate([[0.0, 1.0], field.breakpoints(k)]))
        b = b[(b >= 0) & (b <= 1)]
        acc = 0.0
        for lo, hi in zip(b[:-1], b[1:]):
            if hi <= lo:
                continue
            pieces = _split_at_roots(field, k, lo, hi, deg)
            for a, c in zip(pieces[:-1], pieces[1:]):
                yy = 0.5 * (c - a) * gx + 0.5 * (c + a)
                vals = field.section(k, yy, "value")
                acc += 0.5 * (c - a) * float(np.sum(gw * np.abs(vals) ** p))
        total += acc / field.n
    return total ** (1.0 / p)


def _split_at_roots(field, k, lo, hi, deg):
    if field.degree is None or deg == 0:
        return np.array([lo, hi])
    # interpolate the cell polynomial from interior samples
    xs = lo + (hi - lo) * (np.arange(1, deg + 2) / (deg + 2))
    vals = field.section(k, xs, "value")
    coef = np.polynomial.polynomial.polyfit(xs - lo, vals, deg)
    roots = np.polynomial.polynomial.polyroots(coef) if np.any(coef[1:]) else np.zeros(0)
    roots = np.real(roots[np.abs(np.imag(roots)) < 1e-12]) + lo
    roots = roots[(roots > lo) & (roots < hi)]
    return np.concatenate([[lo], np.sort(roots), [hi]])
