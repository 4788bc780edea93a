"""Limit objects: Y_tau paths, the limit surfaces and the closed-form constants.

Y_tau is normalised so that Var Y_tau(1) = 1/tau!.  For tau = 1 this is
standard fractional Brownian motion with H = 1 - D/2; for tau = 2 it is
one half of a standard Rosenblatt process.  The normalisation follows from
matching d_n^-1 sum H_tau(eta_i)/tau! -> sqrt(2/((2 - tau D)(1 - tau D))) Y_tau
with the exact variance of the Hermite partial sums.

The multiple Wiener-Ito representation of Y_tau,
Z_tau(t) = K(tau, D) int (e^{i t sum x_j} - 1)/(i sum x_j) prod |x_j|^{(D-1)/2} dW(x_1)..dW(x_tau),
is not discretised; the Hermite-sum route below converges to the same law.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import lrd_gauss
from .errors import InvalidSpec, NonEmbeddable
from .hermite import hermite_poly
from .lrd_gauss import _fgn_acov as lg_fgn_acov
from .seq_processes import TwoParamField, d_norm

__all__ = [
    "LimitPath",
    "LimitConstants",
    "simulate_fbm",
    "simulate_hermite_sum",
    "limit_surface",
    "limit_constants",
    "scale_constant",
]


@dataclass(frozen=True)
class LimitPath:
    """Y_tau sampled on the uniform grid t_j = j/m_t, j = 0..m_t."""

    t: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    tau: int
    D: float
    method: str
    seed: int = 0

    @property
    def hurst(self):
        return 1.0 - self.tau * self.D / 2.0

    @property
    def m_t(self):
        return self.t.size - 1

    def at(self, t):
        """Y at the grid point [m_t t] / m_t."""
        j = np.floor(np.asarray(t) * self.m_t + 1e-9).astype(int)
        return self.Y[np.clip(j, 0, self.m_t)]


def _check(tau, D):
    if tau < 1 or not (0 < D < 1.0 / tau):
        raise InvalidSpec(f"need tau >= 1 and 0 < D < 1/tau, got tau={tau}, D={D}")


def simulate_fbm(H, m_t, seed):
    """Fractional Brownian motion with Var Y(1) = 1 on m_t steps.

    Increments are fractional Gaussian noise drawn exactly by circulant
    embedding; the embedding of fGn is nonnegative for every H in (0, 1).
    """
    if not (0.0 < H < 1.0):
        raise InvalidSpec(f"H must lie in (0, 1), got {H}")
    rng = np.random.default_rng(seed)
    if H == 0.5:
        inc = rng.standard_normal(m_t)
    else:
        acov = lg_fgn_acov(H, np.arange(m_t + 1))
        eigs, size = lrd_gauss.circulant_eigenvalues(acov)
        if eigs.min() < -1e-10 * eigs.max():
            raise NonEmbeddable(f"fGn embedding has negative spectrum at H={H}")
        inc = lrd_gauss.circulant_sample(np.maximum(eigs, 0.0), size, m_t, rng)
    Y = np.concatenate([[0.0], np.cumsum(inc)]) * m_t ** (-H)
    t = np.arange(m_t + 1) / m_t
    # D here is the decay exponent of a rank-one driver with this H
    return LimitPath(t, Y, 1, 2.0 - 2.0 * H, "spectral-fbm", seed)


def scale_constant(tau, D):
    """sqrt(2/((2 - tau D)(1 - tau D)))."""
    _check(tau, D)
    return math.sqrt(2.0 / ((2.0 - tau * D) * (1.0 - tau * D)))


def simulate_hermite_sum(tau, D, m=2 ** 14, m_t=256, seed=0, *, cov=None):
    """Approximate Y_tau by (scale)^-1 d_m^-1 sum_{i<=[mt]} H_tau(eta_i)/tau!.

    Parameters
    ----------
    tau, D : int, float
    m : int
        Driver length, at least 2**12.
    m_t : int
        Number of t-steps of the reported grid; must divide ``m``.
    cov : CovarianceSpec, optional
        Driver covariance; defaults to the pure-power model with L = 1.
    """
    _check(tau, D)
    if m < 2 ** 12:
        raise InvalidSpec("driver length m must be at least 2**12")
    if m % m_t:
        raise InvalidSpec("m_t must divide m")
    cov = cov if cov is not None else lrd_gauss.CovarianceSpec(D)
    path = lrd_gauss.generate_path(cov, m, seed)
    h = hermite_poly(tau, np.asarray(path.values)) / math.factorial(tau)
    S = np.concatenate([[0.0], np.cumsum(h)])
    d = d_norm(m, tau, D, cov.slowly_varying)
    idx = (np.arange(m_t + 1) * (m // m_t))
    Y = S[idx] / (d * scale_constant(tau, D))
    return LimitPath(np.arange(m_t + 1) / m_t, Y, tau, D, f"hermite-sum({m})", seed)


@dataclass(frozen=True)
class LimitConstants:
    tau: int
    D: float
    c_weak: float
    c_Q: float
    lil_partial: float
    lil_bk: float
    lil_Q: float


def limit_constants(tau, D, kappas=(math.nan, math.nan, math.nan)):
    """Closed-form normalising constants.

    ``kappas`` is (kappa1, kappa2, kappa3); lil_bk and lil_Q are NaN when
    the corresponding kappa is not supplied.
    """
    _check(tau, D)
    a = (2.0 - tau * D) * (1.0 - tau * D)
    tf = math.factorial(tau)
    _, k2, k3 = kappas
    return LimitConstants(
        tau=tau, D=D,
        c_weak=2.0 / a,
        c_Q=2.0 ** 2.5 * a ** -1.5,
        lil_partial=2.0 ** ((tau + 1) / 2.0) / math.sqrt(tf * a),
        lil_bk=2.0 ** (tau + 1) * k2 / (tf * a),
        lil_Q=2.0 ** ((3 * tau + 5) / 2.0) * k3 * (tf * a) ** -1.5,
    )


Q_CONVENTIONS = ("stated", "derived")


def limit_surface(which, analysis, tau, D, limit_path, *, q_convention="stated"):
    """Deterministic-in-y limit surface times the matching power of Y_tau(t).

    ``bk``      c_weak J J'(y) Y^2(t)
    ``vervaat`` c_weak J^2(s) Y^2(t)
    ``q``       c_Q J^2 J'(s) Y^3(t)

    ``q_convention="derived"`` replaces c_Q by -2^{3/2} a^{-3/2}, the value
    obtained by carrying the w-integral of Z_n through exactly.
    """
    if analysis.tau != tau or limit_path.tau != tau:
        raise InvalidSpec("analysis, limit path and tau must agree")
    c = limit_constants(tau, D)
    a = (2.0 - tau * D) * (1.0 - tau * D)
    if which == "bk":
        shape, power, const = (lambda y: analysis.J(y) * analysis.Jprime(y)), 2, c.c_weak
    elif which == "vervaat":
        shape, power, const = (lambda y: analysis.J(y) ** 2), 2, c.c_weak
    elif which == "q":
        if q_convention not in Q_CONVENTIONS:
            raise InvalidSpec(f"unknown q convention {q_convention!r}")
        const = c.c_Q if q_convention == "stated" else -(2.0 ** 1.5) * a ** -1.5
        shape, power = (lambda y: analysis.J(y) ** 2 * analysis.Jprime(y)), 3
    else:
        raise InvalidSpec(f"unknown limit surface {which!r}")
    Y = limit_path.Y

    def section(k, y, side):
        j = np.asarray(shape(y), dtype=float)
        with np.errstate(invalid="ignore"):
            out = const * j * Y[k] ** power
        return np.where(j == 0, 0.0, out)

    return TwoParamField(f"limit-{which}", limit_path.m_t, section,
                         lambda k: np.zeros(0), degree=None)
