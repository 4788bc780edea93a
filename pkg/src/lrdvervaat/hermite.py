"""Hermite polynomials, expansion coefficients, Hermite rank and kappa constants."""
from dataclasses import dataclass, field
import math
from typing import NamedTuple
import warnings

import numpy as np
from scipy import integrate, optimize, special

from . import distributions as dist
from .errors import RankNotFound, RegionUnsolved, InvalidSpec

__all__ = [
    "hermite_poly",
    "SubordinationSpec",
    "HermiteAnalysis",
    "JDerivatives",
    "coefficient_c",
    "coefficient_c_quad",
    "coefficient_J",
    "hermite_rank",
    "analyze",
    "kappa_constants",
    "j_derivatives",
    "edge_decay_constants",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)
FD_STEP = 1e-5
RANK_CAP = 8


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT2PI


def hermite_poly(l, x):
    """Probabilists' Hermite polynomial H_l evaluated by the three-term recurrence."""
    if l < 0:
        raise ValueError("l must be >= 0")
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), x.copy()
    if l == 0:
        return h_prev[()]
    for j in range(1, l):
        h_prev, h = h, x * h - j * h_prev
    return h[()]


_FAMILIES = ("identity", "square", "absolute", "quantile-compose", "tabulated")


@dataclass(frozen=True)
class SubordinationSpec:
    """The transformation G in X = G(eta).

    Parameters
    ----------
    name : str
        One of ``identity``, ``square``, ``absolute``, ``quantile-compose``
        or ``tabulated``.
    target : DistributionSpec, optional
        For ``quantile-compose``, the law F with G = Q_F o Phi.
    table : tuple of (u, g) tuples, optional
        For ``tabulated``, a strictly monotone table of G, linearly
        interpolated and linearly extrapolated from the end segments.
    """

    name: str
    target: object = None
    table: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.name not in _FAMILIES:
            raise InvalidSpec(f"unknown transformation {self.name!r}")
        if self.name == "quantile-compose" and self.target is None:
            raise InvalidSpec("quantile-compose needs a target distribution")
        if self.name == "tabulated":
            u, g = self._table_arrays()
            if u.size < 2 or np.any(np.diff(u) <= 0):
                raise InvalidSpec("table abscissae must be strictly increasing")

    @classmethod
    def from_table(cls, u, g):
        return cls("tabulated", table=tuple(zip(map(float, u), map(float, g))))

    def _table_arrays(self):
        arr = np.asarray(self.table, dtype=float).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    @property
    def monotone(self):
        if self.name in ("identity", "quantile-compose"):
            return True
        if self.name == "tabulated":
            d = np.diff(self._table_arrays()[1])
            return bool(np.all(d > 0))
        return False

    def describe(self):
        if self.name == "quantile-compose":
            return f"quantile-compose[{self.target.describe()}]"
        return self.name

    def G(self, u):
        u = np.asarray(u, dtype=float)
        if self.name == "identity":
            return u.copy()
        if self.name == "square":
            return u * u
        if self.name == "absolute":
            return np.abs(u)
        if self.name == "quantile-compose":
            return self.target.Q(special.ndtr(u))
        uu, gg = self._table_arrays()
        lo = gg[0] + (u - uu[0]) * (gg[1] - gg[0]) / (uu[1] - uu[0])
        hi = gg[-1] + (u - uu[-1]) * (gg[-1] - gg[-2]) / (uu[-1] - uu[-2])
        return np.where(u < uu[0], lo, np.where(u > uu[-1], hi, np.interp(u, uu, gg)))

    def pit(self, eta):
        """U = F(G(eta)) evaluated without passing through G."""
        eta = np.asarray(eta, dtype=float)
        if self.name in ("square", "absolute"):
            return special.erf(np.abs(eta) / math.sqrt(2.0))
        if self.name == "tabulated" and not self.monotone:
            raise RegionUnsolved("probability transform needs a strictly increasing table")
        return special.ndtr(eta)

    def _ginv(self, x):
        uu, gg = self._table_arrays()
        x = np.asarray(x, dtype=float)
        lo = uu[0] + (x - gg[0]) * (uu[1] - uu[0]) / (gg[1] - gg[0])
        hi = uu[-1] + (x - gg[-1]) * (uu[-1] - uu[-2]) / (gg[-1] - gg[-2])
        return np.where(x < gg[0], lo, np.where(x > gg[-1], hi, np.interp(x, gg, uu)))

    def marginal(self):
        """Law F of G(eta)."""
        if self.name == "identity":
            return dist.normal()
        if self.name == "square":
            return dist.chi_square1()
        if self.name == "absolute":
            return dist.half_normal()
        if self.name == "quantile-compose":
            return self.target
        if not self.monotone:
            raise RegionUnsolved("tabulated G must be strictly increasing")
        uu, gg = self._table_arrays()
        slopes = np.diff(gg) / np.diff(uu)
        ginv = self._ginv

        def slope_at(x):
            idx = np.clip(np.searchsorted(gg, x, side="right") - 1, 0, slopes.size - 1)
            return slopes[idx]

        return dist.DistributionSpec(
            "tabulated-G",
            F=lambda x: special.ndtr(ginv(x)),
            f=lambda x: _phi(ginv(x)) / slope_at(np.asarray(x, dtype=float)),
            fprime=lambda x: (-ginv(x) * _phi(ginv(x))
                              / slope_at(np.asarray(x, dtype=float)) ** 2),
            Q=lambda y: self.G(special.ndtri(np.asarray(y, dtype=float))),
        )

    def region(self, x):
        """Describe {u : G(u) <= x} as ``(kind, a)``.

        ``kind`` is ``lower`` for (-inf, a], ``symmetric`` for [-a, a],
        ``empty`` or ``all``; ``a`` is an array broadcast with ``x``.
        """
        x = np.asarray(x, dtype=float)
        if self.name == "identity":
            return "lower", x
        if self.name in ("square", "absolute"):
            with np.errstate(invalid="ignore"):
                a = np.sqrt(x) if self.name == "square" else x.copy()
            return "symmetric", np.where(x < 0, np.nan, a)
        if self.name == "quantile-compose":
            return "lower", special.ndtri(self.target.F(x))
        if not self.monotone:
            raise RegionUnsolved("region solver needs a strictly increasing table")
        return "lower", self._ginv(x)

    def threshold_of_y(self, y):
        """Region of {u : F(G(u)) <= y} directly in terms of y."""
        y = np.asarray(y, dtype=float)
        if self.name in ("identity", "quantile-compose", "tabulated"):
            if self.name == "tabulated" and not self.monotone:
                raise RegionUnsolved("region solver needs a strictly increasing table")
            return "lower", special.ndtri(y)
        return "symmetric", special.ndtri((1.0 + y) / 2.0)


def _boundary_coefficient(kind, a, l):
    a = np.asarray(a, dtype=float)
    finite = np.isfinite(a)
    af = np.where(finite, a, 0.0)
    if kind == "lower":
        val = -hermite_poly(l - 1, af) * _phi(af)
    else:
        val = (-hermite_poly(l - 1, af) + hermite_poly(l - 1, -af)) * _phi(af)
    # infinite endpoints and empty regions (nan) contribute nothing
    return np.where(finite, val, 0.0)


def coefficient_c(spec, F=None, l=1, x=0.0):
    """c_l(x) = E[(1{G(eta) <= x} - F(x)) H_l(eta)] from boundary terms.

    Parameters
    ----------
    spec : SubordinationSpec
    F : DistributionSpec, optional
        Unused for l >= 1 (E H_l = 0); accepted for signature symmetry.
    l : int
        Order, >= 1.
    x : float or array
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    kind, a = spec.region(x)
    return _boundary_coefficient(kind, a, l)[()]


def _crossings(spec, x, lo=-12.0, hi=12.0, m=4801):
    u = np.linspace(lo, hi, m)
    g = spec.G(u) - x
    pts = [lo]
    for i in np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0]:
        if g[i] == 0:
            pts.append(u[i])
            continue
        pts.append(optimize.brentq(lambda v: float(spec.G(v) - x), u[i], u[i + 1],
                                   xtol=1e-14))
    pts.append(hi)
    return np.unique(pts)


def coefficient_c_quad(spec, l, x):
    """Quadrature oracle for c_l(x), independent of the region solver.

    Breakpoints of {G <= x} are located by a grid scan plus bisection and
    H_l phi is integrated over the sub-intervals where G <= x.
    """
    pts = _crossings(spec, float(x))
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (lo + hi)
        if spec.G(mid) <= x:
            # extend the outermost pieces to infinity
            a = -np.inf if lo == pts[0] else lo
            b = np.inf if hi == pts[-1] else hi
            val, _ = integrate.quad(lambda v: float(hermite_poly(l, v) * _phi(v)), a, b,
                                    epsabs=1e-13, epsrel=1e-12, limit=200)
            total += val
    return total


def coefficient_J(spec, F=None, l=1, y=0.5):
    """J_l(y) = c_l(Q(y)), computed from the threshold in y directly."""
    if l < 1:
        raise ValueError("l must be >= 1")
    kind, a = spec.threshold_of_y(y)
    return _boundary_coefficient(kind, a, l)[()]


def hermite_rank(spec, F=None, tol=1e-8, x_grid=None):
    """Smallest l <= 8 with max_x |c_l(x)| > tol."""
    if x_grid is None:
        F = F if F is not None else spec.marginal()
        x_grid = F.Q(np.linspace(0.02, 0.98, 25))
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if x_grid.size == 0:
        raise ValueError("x_grid must be nonempty")
    for l in range(1, RANK_CAP + 1):
        if np.max(np.abs(coefficient_c(spec, F, l, x_grid))) > tol:
            return l
    raise RankNotFound(f"all |c_l| <= {tol:g} through l={RANK_CAP}")


class JDerivatives(NamedTuple):
    first: object
    second: object
    method: str


def _closed_form_derivatives(spec, tau, y):
    """(J', J'') by chain rule where available, else None."""
    y = np.asarray(y, dtype=float)
    if tau == 1 and spec.name in ("identity", "quantile-compose", "tabulated") and spec.monotone:
        q = special.ndtri(y)
        with np.errstate(divide="ignore", over="ignore"):
            return q, 1.0 / _phi(q)
    if tau == 2 and spec.name in ("square", "absolute"):
        a = special.ndtri((1.0 + y) / 2.0)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return a * a - 1.0, a / _phi(a)
    return None


def _fd_derivatives(J, y, h=FD_STEP):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d1 = np.empty_like(y)
    d2 = np.empty_like(y)
    left = y < h
    right = y > 1.0 - h
    mid = ~(left | right)
    if mid.any():
        ym = y[mid]
        jp, j0, jm = J(ym + h), J(ym), J(ym - h)
        d1[mid] = (jp - jm) / (2 * h)
        d2[mid] = (jp - 2 * j0 + jm) / (h * h)
    if left.any():
        yl = y[left]
        j0, j1, j2 = J(yl), J(yl + h), J(yl + 2 * h)
        d1[left] = (-3 * j0 + 4 * j1 - j2) / (2 * h)
        d2[left] = (j0 - 2 * j1 + j2) / (h * h)
    if right.any():
        yr = y[right]
        j0, j1, j2 = J(yr), J(yr - h), J(yr - 2 * h)
        d1[right] = (3 * j0 - 4 * j1 + j2) / (2 * h)
        d2[right] = (j0 - 2 * j1 + j2) / (h * h)
    return d1, d2


def j_derivatives(spec, F=None, y=0.5, *, tau=None, method="auto", step=FD_STEP):
    """First and second derivative of J_tau at ``y``.

    ``method`` is ``auto`` (closed form when the chain rule is available,
    finite differences otherwise), ``closed`` or ``fd``.
    """
    if tau is None:
        tau = hermite_rank(spec, F)
    scalar = np.ndim(y) == 0
    if method in ("auto", "closed"):
        cf = _closed_form_derivatives(spec, tau, y)
        if cf is not None:
            d1, d2 = (np.asarray(v)[()] for v in cf)
            return JDerivatives(d1, d2, "closed-form")
        if method == "closed":
            raise ValueError(f"no closed form for {spec.describe()} at rank {tau}")
    d1, d2 = _fd_derivatives(lambda v: coefficient_J(spec, F, tau, v), y, step)
    if scalar:
        d1, d2 = float(d1[0]), float(d2[0])
    return JDerivatives(d1, d2, "finite-difference")


@dataclass(frozen=True)
class HermiteAnalysis:
    """Rank, J_tau and its derivatives, and the kappa constants for one (G, F)."""

    spec: SubordinationSpec
    F: object = field(repr=False)
    tau: int = 1
    kappa1: float = 0.0
    kappa2: float = 0.0
    kappa3: float = 0.0
    derivative_method: str = "closed-form"

    def J(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where((y <= 0) | (y >= 1), 0.0,
                       coefficient_J(self.spec, self.F, self.tau, np.clip(y, 1e-300, 1.0)))
        return out[()]

    def Jprime(self, y):
        return j_derivatives(self.spec, self.F, y, tau=self.tau).first

    def Jsecond(self, y):
        return j_derivatives(self.spec, self.F, y, tau=self.tau).second

    @property
    def kappas(self):
        return self.kappa1, self.kappa2, self.kappa3


def _sup_refined(fun, grid):
    vals = np.abs(fun(grid))
    vals = np.where(np.isfinite(vals), vals, 0.0)
    i = int(np.argmax(vals))
    best = float(vals[i])
    if best == 0.0:
        return 0.0
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda v: -float(np.abs(fun(np.array([v]))[0])),
                                   bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return max(best, float(-res.fun))


def kappa_constants(analysis, grid_size=10_000):
    """(sup|J|, sup|J J'|, sup|J^2 J'|) over (0, 1).

    A uniform grid is searched first and the best point is polished by a
    bounded golden-section search on its neighbouring cell.
    """
    grid = np.linspace(0.0, 1.0, grid_size + 2)[1:-1]
    J, Jp = analysis.J, analysis.Jprime

    def prod(v, power):
        j = J(v)
        with np.errstate(invalid="ignore", over="ignore"):
            out = j ** power * Jp(v)
        return np.where(j == 0, 0.0, out)

    k1 = _sup_refined(J, grid)
    k2 = _sup_refined(lambda v: prod(v, 1), grid)
    k3 = _sup_refined(lambda v: prod(v, 2), grid)
    return k1, k2, k3


def analyze(spec, F=None, *, tol=1e-8, grid_size=10_000):
    """Build the :class:`HermiteAnalysis` of ``spec`` (rank, J, kappas)."""
    F = F if F is not None else spec.marginal()
    tau = hermite_rank(spec, F, tol)
    method = "closed-form" if _closed_form_derivatives(spec, tau, 0.5) is not None \
        else "finite-difference"
    base = HermiteAnalysis(spec, F, tau, derivative_method=method)
    k1, k2, k3 = kappa_constants(base, grid_size)
    if spec.name == "tabulated":
        consts = edge_decay_constants(base)
        if max(consts) > 2.0 * min(consts):
            warnings.warn("edge decay of J looks slower than O(delta) for this table",
                          stacklevel=2)
    return HermiteAnalysis(spec, F, tau, k1, k2, k3, method)


def edge_decay_constants(analysis, deltas=(0.1, 0.01, 0.001), grid_size=2000):
    """C_delta = sup_{0<y<=delta} |J(y)| / delta for each delta."""
    out = []
    for d in deltas:
        y = np.geomspace(d * 1e-6, d, grid_size)
        out.append(float(np.max(np.abs(analysis.J(y)))) / d)
    return tuple(out)
