"""Marginal distributions F, f, f', Q and the regularity checks on them."""
from dataclasses import dataclass, field
import math
import re

import numpy as np
from scipy import optimize, special

from .errors import EvaluationDomain, InvalidSpec

__all__ = [
    "DistributionSpec",
    "ConditionReport",
    "uniform",
    "exponential",
    "normal",
    "chi_square1",
    "half_normal",
    "pareto",
    "tabulated",
    "from_name",
    "check_conditions",
    "quantile_roundtrip",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT2PI


@dataclass(frozen=True)
class DistributionSpec:
    """A continuous marginal law with everything the processes need.

    ``F``, ``f``, ``fprime`` and ``Q`` are vectorized callables; ``a`` and
    ``b`` are the (possibly infinite) support endpoints.
    """

    name: str
    F: object = field(repr=False, compare=False)
    f: object = field(repr=False, compare=False)
    fprime: object = field(repr=False, compare=False)
    Q: object = field(repr=False, compare=False)
    a: float = -math.inf
    b: float = math.inf
    params: tuple = ()

    def fQ(self, y):
        """Density-quantile f(Q(y)); zero where Q(y) is an infinite endpoint."""
        y = np.asarray(y, dtype=float)
        x = self.Q(y)
        with np.errstate(invalid="ignore", over="ignore"):
            out = np.where(np.isfinite(x), self.f(np.where(np.isfinite(x), x, 0.0)), 0.0)
        return out[()]

    def describe(self):
        if not self.params:
            return self.name
        return f"{self.name}({','.join(f'{p:g}' for p in self.params)})"


def uniform(lo=0.0, hi=1.0):
    if not hi > lo:
        raise InvalidSpec("uniform needs hi > lo")
    w = hi - lo
    return DistributionSpec(
        "uniform",
        F=lambda x: np.clip((np.asarray(x, dtype=float) - lo) / w, 0.0, 1.0),
        f=lambda x: np.where((np.asarray(x) >= lo) & (np.asarray(x) <= hi), 1.0 / w, 0.0),
        fprime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        Q=lambda y: lo + w * np.asarray(y, dtype=float),
        a=lo, b=hi, params=(lo, hi) if (lo, hi) != (0.0, 1.0) else (),
    )


def _exp_quantile(y, rate):
    with np.errstate(divide="ignore"):
        return -np.log1p(-np.asarray(y, dtype=float)) / rate


def exponential(rate=1.0):
    if not rate > 0:
        raise InvalidSpec("exponential rate must be positive")
    return DistributionSpec(
        "exponential",
        F=lambda x: -np.expm1(-rate * np.maximum(np.asarray(x, dtype=float), 0.0)),
        f=lambda x: np.where(np.asarray(x) >= 0, rate * np.exp(-rate * np.maximum(x, 0.0)), 0.0),
        fprime=lambda x: np.where(np.asarray(x) >= 0,
                                  -rate * rate * np.exp(-rate * np.maximum(x, 0.0)), 0.0),
        Q=lambda y: _exp_quantile(y, rate),
        a=0.0, b=math.inf, params=(rate,),
    )


def normal(mu=0.0, sigma=1.0):
    if not sigma > 0:
        raise InvalidSpec("normal sigma must be positive")
    return DistributionSpec(
        "normal",
        F=lambda x: special.ndtr((np.asarray(x, dtype=float) - mu) / sigma),
        f=lambda x: _phi((np.asarray(x, dtype=float) - mu) / sigma) / sigma,
        fprime=lambda x: (-(np.asarray(x, dtype=float) - mu) / sigma ** 3
                          * _phi((np.asarray(x, dtype=float) - mu) / sigma)),
        Q=lambda y: mu + sigma * special.ndtri(np.asarray(y, dtype=float)),
        params=(mu, sigma),
    )


def chi_square1():
    """Law of eta**2 for standard normal eta."""
    def f(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.sqrt(np.maximum(x, 0.0))
            return np.where(x > 0, _phi(r) / r, 0.0)

    def fprime(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.sqrt(np.maximum(x, 0.0))
            return np.where(x > 0, -_phi(r) * (1.0 / (2.0 * r) + 1.0 / (2.0 * r ** 3)), 0.0)

    return DistributionSpec(
        "chi2",
        F=lambda x: 2.0 * special.ndtr(np.sqrt(np.maximum(np.asarray(x, dtype=float), 0.0))) - 1.0,
        f=f, fprime=fprime,
        Q=lambda y: special.ndtri((1.0 + np.asarray(y, dtype=float)) / 2.0) ** 2,
        a=0.0, b=math.inf,
    )


def half_normal():
    """Law of |eta| for standard normal eta."""
    return DistributionSpec(
        "halfnormal",
        F=lambda x: np.maximum(2.0 * special.ndtr(np.asarray(x, dtype=float)) - 1.0, 0.0),
        f=lambda x: np.where(np.asarray(x) >= 0, 2.0 * _phi(x), 0.0),
        fprime=lambda x: np.where(np.asarray(x) >= 0, -2.0 * np.asarray(x) * _phi(x), 0.0),
        Q=lambda y: special.ndtri((1.0 + np.asarray(y, dtype=float)) / 2.0),
        a=0.0, b=math.inf,
    )


def pareto(alpha=1.0):
    """Pareto law on [1, inf); y(1-y)|f'|/f^2 equals y (alpha+1)/alpha."""
    if not alpha > 0:
        raise InvalidSpec("pareto alpha must be positive")

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 1, alpha * np.maximum(x, 1.0) ** (-alpha - 1), 0.0)

    def fprime(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 1, -alpha * (alpha + 1) * np.maximum(x, 1.0) ** (-alpha - 2), 0.0)

    return DistributionSpec(
        "pareto",
        F=lambda x: np.where(np.asarray(x) >= 1, 1.0 - np.maximum(x, 1.0) ** (-alpha), 0.0),
        f=f, fprime=fprime,
        Q=lambda y: (1.0 - np.asarray(y, dtype=float)) ** (-1.0 / alpha),
        a=1.0, b=math.inf, params=(alpha,),
    )


def tabulated(xs, ps):
    """Distribution given by a strictly increasing table, linearly interpolated.

    ``ps`` must start at 0 and end at 1.
    """
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or xs.shape != ps.shape:
        raise InvalidSpec("table needs two equal-length 1-d arrays of size >= 2")
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ps) <= 0):
        raise InvalidSpec("table must be strictly increasing in x and p")
    if ps[0] != 0.0 or ps[-1] != 1.0:
        raise InvalidSpec("table probabilities must run from 0 to 1")
    dens = np.diff(ps) / np.diff(xs)

    def f(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, dens.size - 1)
        return np.where((x >= xs[0]) & (x <= xs[-1]), dens[idx], 0.0)

    xt, pt = tuple(xs), tuple(ps)
    return DistributionSpec(
        "tabulated",
        F=lambda x: np.interp(x, xs, ps),
        f=f,
        fprime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        Q=lambda y: np.interp(y, ps, xs),
        a=float(xs[0]), b=float(xs[-1]), params=xt + pt,
    )


_NAME_RE = re.compile(r"^\s*([a-z0-9_-]+)\s*(?:\((.*)\))?\s*$")


def from_name(text):
    """Parse names such as ``normal(0,1)``, ``exponential(2)``, ``uniform``."""
    m = _NAME_RE.match(text.lower())
    if not m:
        raise InvalidSpec(f"cannot parse distribution {text!r}")
    name, args = m.group(1), m.group(2)
    try:
        vals = [float(v) for v in args.split(",")] if args and args.strip() else []
    except ValueError as exc:
        raise InvalidSpec(f"bad parameters in {text!r}") from exc
    makers = {
        "uniform": uniform, "exponential": exponential, "normal": normal,
        "chi2": chi_square1, "halfnormal": half_normal, "pareto": pareto,
    }
    if name not in makers:
        raise InvalidSpec(f"unknown distribution {name!r}")
    try:
        return makers[name](*vals)
    except TypeError as exc:
        raise InvalidSpec(f"wrong number of parameters in {text!r}") from exc


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of checking conditions (i)-(v') on F.

    ``gamma_hat`` is a grid supremum and therefore a lower bound on the
    true supremum.
    """

    gamma_hat: float
    argmax_y: float
    cond_i: bool
    cond_ii: bool
    cond_iii: bool
    A_limit: float
    B_limit: float
    v_variant: str
    gamma_bound: float
    gamma_is_lower_bound: bool = True

    @property
    def satisfies_i_through_iii(self):
        return self.cond_i and self.cond_ii and self.cond_iii


def _logit_grid(m, eps):
    lo, hi = math.log(eps / (1 - eps)), math.log((1 - eps) / eps)
    return special.expit(np.linspace(lo, hi, m))


def _score(spec, y):
    x = spec.Q(y)
    fx, fpx = spec.f(x), spec.fprime(x)
    if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fpx))):
        raise EvaluationDomain(f"f or f' not finite on the grid for {spec.describe()}")
    if np.any(fx <= 0):
        return None
    return y * (1 - y) * np.abs(fpx) / fx ** 2


def _edge_limit(spec, side):
    probes = 10.0 ** -np.arange(1, 13)
    y = probes if side == "a" else 1.0 - probes
    with np.errstate(all="ignore"):
        vals = spec.fQ(y)
    last = float(vals[-1])
    # a density decaying to zero along the approach grid is reported as 0
    if last <= 1e-9 * max(float(np.max(vals)), 1.0):
        last = 0.0
    return last, vals


def check_conditions(spec, tau, D, grid_size=4097, *, eps=1e-6, refine=True):
    """Check the regularity conditions on F used for the general quantile process.

    Parameters
    ----------
    spec : DistributionSpec
    tau, D : int, float
        Hermite rank and decay exponent; set the bound 1 + tau D/(2 - 2 tau D).
    grid_size : int
        Points of the logit-uniform y grid on [eps, 1 - eps].  Grids of
        size 2**j + 1 are nested, so ``gamma_hat`` cannot decrease under
        doubling when ``refine`` is off.
    """
    if not (0 < D < 1.0 / tau):
        raise InvalidSpec(f"need 0 < D < 1/tau, got tau={tau}, D={D}")
    y = _logit_grid(grid_size, eps)
    score = _score(spec, y)
    cond_ii = score is not None
    if not cond_ii:
        score = np.zeros_like(y)
    i = int(np.argmax(score))
    gamma_hat, argmax = float(score[i]), float(y[i])
    if refine and cond_ii and gamma_hat > 0:
        lo, hi = y[max(i - 1, 0)], y[min(i + 1, y.size - 1)]
        res = optimize.minimize_scalar(lambda v: -float(_score(spec, np.array([v]))[0]),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        if -res.fun > gamma_hat:
            gamma_hat, argmax = float(-res.fun), float(res.x)
    # tail probes beyond the grid
    tails = np.concatenate([10.0 ** -np.arange(7, 13), 1.0 - 10.0 ** -np.arange(7, 13)])
    with np.errstate(all="ignore"):
        tail_score = _score(spec, tails) if cond_ii else None
    if tail_score is not None:
        j = int(np.argmax(tail_score))
        if tail_score[j] > gamma_hat:
            gamma_hat, argmax = float(tail_score[j]), float(tails[j])

    A, a_vals = _edge_limit(spec, "a")
    B, b_vals = _edge_limit(spec, "b")
    if min(A, B) > 0:
        variant = "v"
    else:
        ok = True
        if A == 0:
            ya = np.geomspace(1e-12, 1e-2, 32)
            ok &= bool(np.all(np.diff(spec.fQ(ya)) >= 0))
        if B == 0:
            yb = 1.0 - np.geomspace(1e-2, 1e-12, 32)
            ok &= bool(np.all(np.diff(spec.fQ(yb)) <= 0))
        variant = "v-prime" if ok else "neither"
    bound = 1.0 + tau * D / (2.0 - 2.0 * tau * D)
    return ConditionReport(
        gamma_hat=gamma_hat, argmax_y=argmax, cond_i=True, cond_ii=cond_ii,
        cond_iii=bool(cond_ii and gamma_hat < bound),
        A_limit=A, B_limit=B, v_variant=variant, gamma_bound=bound,
    )


def quantile_roundtrip(spec, y_grid=None, x_grid=None):
    """Max |F(Q(y)) - y| and |Q(F(x)) - x| over the supplied grids."""
    if y_grid is None:
        y_grid = np.linspace(0.01, 0.99, 99)
    y_grid = np.asarray(y_grid, dtype=float)
    err_y = float(np.max(np.abs(spec.F(spec.Q(y_grid)) - y_grid)))
    if x_grid is None:
        x_grid = spec.Q(y_grid)
    x_grid = np.asarray(x_grid, dtype=float)
    err_x = float(np.max(np.abs(spec.Q(spec.F(x_grid)) - x_grid)))
    return {"max_F_of_Q": err_y, "max_Q_of_F": err_x}
