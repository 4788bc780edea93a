"""Stationary long-range dependent Gaussian drivers.

The covariance model is gamma(k) = k**(-D) * L(k) for k >= 1, gamma(0) = 1.
Paths are drawn by circulant embedding of the covariance sequence, with a
Cholesky fallback for short paths whose embedding is not nonnegative.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math
import warnings

import numpy as np
from scipy.linalg import cholesky, toeplitz

from .errors import InvalidSpec, NonEmbeddable

__all__ = [
    "ConstantL",
    "LogL",
    "CovarianceSpec",
    "GaussianPath",
    "autocovariance",
    "autocovariance_sequence",
    "circulant_eigenvalues",
    "circulant_sample",
    "generate_path",
    "partial_sum_variance",
    "realized_autocovariance",
    "hermite_sum_variance",
]

CHOLESKY_MAX_N = 2048


@dataclass(frozen=True)
class ConstantL:
    """Slowly varying function L(k) = c."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidSpec(f"L constant must be positive, got {self.c}")

    def __call__(self, k):
        return np.full_like(np.asarray(k, dtype=float), self.c)[()]

    def describe(self):
        return f"const:{self.c:g}"


@dataclass(frozen=True)
class LogL:
    """Slowly varying function L(k) = (1 + log(1 + k))**a."""

    a: float = 1.0

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        return ((1.0 + np.log1p(k)) ** self.a)[()]

    def describe(self):
        return f"log:{self.a:g}"


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariance model of the Gaussian driver.

    Parameters
    ----------
    D : float
        Decay exponent, 0 < D < 1.
    L : ConstantL or LogL
        Slowly varying factor (pure-power family only).
    family : {"pure-power", "fgn-matched"}
        ``pure-power`` uses k**(-D) L(k) at every lag k >= 1.
        ``fgn-matched`` uses the fractional Gaussian noise covariance with
        Hurst index H = 1 - D/2, whose tail is H(2H-1) k**(-D).
    """

    D: float
    L: object = field(default_factory=ConstantL)
    family: str = "pure-power"

    def __post_init__(self):
        if not (0.0 < self.D < 1.0):
            raise InvalidSpec(f"D must lie in (0, 1), got {self.D}")
        if self.family not in ("pure-power", "fgn-matched"):
            raise InvalidSpec(f"unknown covariance family {self.family!r}")

    @property
    def hurst(self):
        return 1.0 - self.D / 2.0

    @property
    def slowly_varying(self):
        """The L(.) that makes gamma(k) ~ k**(-D) L(k) hold asymptotically."""
        if self.family == "fgn-matched":
            H = self.hurst
            return ConstantL(H * (2.0 * H - 1.0))
        return self.L


def _fgn_acov(H, k):
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * ((k + 1.0) ** (2 * H) - 2.0 * k ** (2 * H) + np.abs(k - 1.0) ** (2 * H))


def autocovariance(spec, k):
    """Covariance E(eta_1 eta_{k+1}) at lag ``k`` (scalar or array)."""
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("lag must be nonnegative")
    if spec.family == "fgn-matched":
        out = _fgn_acov(spec.hurst, k)
    else:
        kf = np.maximum(k, 1).astype(float)
        out = kf ** (-spec.D) * spec.L(kf)
    return np.where(k == 0, 1.0, out)[()]


def autocovariance_sequence(spec, n):
    """gamma(0), ..., gamma(n-1)."""
    return np.asarray(autocovariance(spec, np.arange(n)), dtype=float)


def circulant_eigenvalues(acov):
    """Spectrum of the minimal circulant embedding of ``acov[0..n]``.

    ``acov`` holds gamma(0..n); the first row is
    [gamma(0), ..., gamma(n), gamma(n-1), ..., gamma(1)] of length 2n.
    """
    acov = np.asarray(acov, dtype=float)
    row = np.concatenate([acov, acov[-2:0:-1]])
    return np.fft.rfft(row).real, row.size


def circulant_sample(eigs, size, n, rng):
    """One exact sample of length ``n`` given a nonnegative circulant spectrum.

    ``eigs`` is the half spectrum returned by :func:`circulant_eigenvalues`.
    """
    full = np.concatenate([eigs, eigs[-2:0:-1]])
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    y = np.fft.fft(np.sqrt(full / size) * z)
    return y.real[:n]


@dataclass(frozen=True)
class _Embedding:
    eigs: np.ndarray
    size: int
    method: str
    clipped_mass: float
    chol: np.ndarray = None


def _repair(eigs, size):
    """Clip negative spectrum and rescale so the realized variance is exactly 1."""
    clipped = np.clip(eigs, 0.0, None)
    full_sum = clipped[0] + clipped[size // 2] + 2.0 * clipped[1:size // 2].sum()
    return clipped * (size / full_sum)


@lru_cache(maxsize=32)
def _embedding(spec, n, repair, clip_tol):
    acov = np.asarray(autocovariance(spec, np.arange(n + 1)), dtype=float)
    eigs, size = circulant_eigenvalues(acov)
    neg = eigs < 0
    if not neg.any():
        return _Embedding(eigs, size, "circulant", 0.0)
    mass = float(-eigs[neg].sum() / np.abs(eigs).sum())
    if mass <= clip_tol:
        return _Embedding(np.clip(eigs, 0.0, None), size, "circulant", mass)
    if n <= CHOLESKY_MAX_N:
        try:
            chol = cholesky(toeplitz(acov[:n]), lower=True)
            return _Embedding(eigs, size, "cholesky", mass, chol)
        except np.linalg.LinAlgError:
            pass
    if not repair:
        raise NonEmbeddable(
            f"negative circulant mass {mass:.3e} exceeds tolerance {clip_tol:.1e}")
    warnings.warn(f"clipping negative circulant spectrum (relative mass {mass:.3e})",
                  stacklevel=3)
    return _Embedding(_repair(eigs, size), size, "circulant-clipped", mass)


def realized_autocovariance(spec, n, *, repair=True, clip_tol=1e-10):
    """Covariance actually sampled by :func:`generate_path` at lags 0..n-1."""
    emb = _embedding(spec, int(n), bool(repair), float(clip_tol))
    if emb.method == "cholesky":
        return autocovariance_sequence(spec, n)
    full = np.concatenate([emb.eigs, emb.eigs[-2:0:-1]])
    return np.fft.ifft(full).real[:n]


@dataclass(frozen=True)
class GaussianPath:
    """A sampled driver eta_1..eta_n together with how it was produced."""

    values: np.ndarray
    seed: int
    spec: CovarianceSpec
    method: str = "circulant"
    clipped_mass: float = 0.0

    def __len__(self):
        return self.values.size


def generate_path(spec, n, seed, *, repair=True, clip_tol=1e-10):
    """Sample a stationary Gaussian sequence with covariance ``spec``.

    Parameters
    ----------
    spec : CovarianceSpec
    n : int
        Path length, >= 1.
    seed : int
        Seed of a fresh ``numpy.random.Generator``; identical
        ``(spec, n, seed)`` give bit-identical values.
    repair : bool
        Clip negative spectral values when neither exact route applies.
    clip_tol : float
        Relative negative spectral mass tolerated without any fallback.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    emb = _embedding(spec, int(n), bool(repair), float(clip_tol))
    rng = np.random.default_rng(seed)
    if emb.method == "cholesky":
        values = emb.chol @ rng.standard_normal(n)
    else:
        values = circulant_sample(emb.eigs, emb.size, n, rng)
    values.setflags(write=False)
    return GaussianPath(values, seed, spec, emb.method, emb.clipped_mass)


def partial_sum_variance(spec, n):
    """Exact Var(eta_1 + ... + eta_n) = n + 2 sum_{k<n} (n-k) gamma(k)."""
    return hermite_sum_variance(spec, n, 1)


def hermite_sum_variance(spec, n, tau, acov=None):
    """Exact Var(sum_{i<=n} H_tau(eta_i)/tau!) = sum_{i,j} gamma(i-j)**tau / tau!.

    ``acov`` (lags 0..n-1) replaces the nominal gamma, for instance by
    :func:`realized_autocovariance` to match what the sampler produces.
    """
    if acov is None:
        g0, g = 1.0, np.asarray(autocovariance(spec, np.arange(1, n)), dtype=float)
    else:
        acov = np.asarray(acov, dtype=float)
        if acov.size < n:
            raise ValueError("acov must cover lags 0..n-1")
        g0, g = acov[0], acov[1:n]
    k = np.arange(1, n)
    total = n * g0 ** tau + 2.0 * np.sum((n - k) * g ** tau)
    return float(total / math.factorial(tau))
