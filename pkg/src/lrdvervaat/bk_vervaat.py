"""Bahadur-Kiefer, Vervaat and Vervaat-error processes and the reduction field."""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import integrate

from .hermite import hermite_poly
from .seq_processes import TwoParamField, process_field, _d_of, level
from .errors import InvalidSpec

__all__ = [
    "Model",
    "ReductionField",
    "VervaatBundle",
    "reduction_field",
    "r_star",
    "r_star_definition",
    "r_general",
    "check_4_12",
    "vervaat",
    "vervaat_error",
    "a_process",
    "z_process",
    "delta_n",
    "vervaat_bundle",
    "identity_residuals",
]


@dataclass(frozen=True)
class Model:
    """Normalisation data shared by all fields of one sample."""

    n: int
    tau: int
    D: float
    L: object = None

    def __post_init__(self):
        if not (0 < self.D < 1.0 / self.tau):
            raise InvalidSpec(f"need 0 < D < 1/tau, got tau={self.tau}, D={self.D}")

    @property
    def Ln(self):
        return 1.0 if self.L is None else float(self.L(self.n))

    @property
    def d(self):
        return math.sqrt(self.n ** (2.0 - self.tau * self.D) * self.Ln ** self.tau)


def delta_n(n, tau, D, L=None):
    """Trimming width (n^-D L(n) loglog n)^tau, with loglog n read as loglog max(n, 27)."""
    Ln = 1.0 if L is None else float(L(n))
    return (n ** (-D) * Ln * math.log(math.log(max(n, 27)))) ** tau


@dataclass(frozen=True)
class ReductionField:
    """V(y, nt) = J_tau(y) S_[nt] with S_k = sum_{i<=k} H_tau(eta_i)/tau!."""

    S: np.ndarray = field(repr=False)
    J: object = field(repr=False)
    tau: int = 1

    @property
    def n(self):
        return self.S.size - 1

    def __call__(self, y, t):
        k = level(self.n, t)
        return np.asarray(self.J(y)) * self.S[k]

    def at_level(self, y, k):
        return np.asarray(self.J(y)) * self.S[int(k)]

    def as_field(self):
        return TwoParamField("V", self.n, lambda k, y, side: self.at_level(y, k),
                             lambda k: np.zeros(0), degree=None)


def reduction_field(path, analysis):
    """Prefix sums of H_tau(eta_i)/tau! for a path (GaussianPath or array)."""
    eta = np.asarray(getattr(path, "values", path), dtype=float)
    if eta.size < 1:
        raise ValueError("path must have length >= 1")
    tau = analysis.tau
    h = hermite_poly(tau, eta) / math.factorial(tau)
    S = np.concatenate([[0.0], np.cumsum(h)])
    S.setflags(write=False)
    return ReductionField(S, analysis.J, tau)


def _u_breaks(k):
    return np.arange(1, k) / k


def _all_breaks(sec):
    return sec.breaks()


def r_star(batch, model):
    """R*_n(y, t) = [nt](Ê + Û - 2y), linear in y between breakpoints."""
    sec = batch.section
    return TwoParamField(
        "rstar", batch.n,
        lambda k, y, side: k * (sec(k).E(y, side) + sec(k).U(y, side) - 2.0 * y),
        lambda k: _all_breaks(sec(k)), dtype=batch.dtype,
    )


def r_star_definition(batch, model):
    """R*_n by its definition d_n(alpha_n - u_n)."""
    d = _d_of(model)
    alpha = process_field(batch, "alpha", model)
    u = process_field(batch, "u", model)
    return TwoParamField("rstar-def", batch.n,
                         lambda k, y, side: d * (alpha.section(k, y, side) - u.section(k, y, side)),
                         lambda k: _all_breaks(batch.section(k)), dtype=batch.dtype)


def r_general(batch, model, F, *, check=True, probes=100, seed=0):
    """R_n = d_n(beta_n(Q(y), t) - rho_n(y, t)); optionally checks (4.12)."""
    d = _d_of(model)
    beta = process_field(batch, "beta", model, F)
    rho = process_field(batch, "rho", model, F)
    out = TwoParamField("rgeneral", batch.n,
                        lambda k, y, side: d * (beta.section(k, y, side) - rho.section(k, y, side)),
                        lambda k: _all_breaks(batch.section(k)), degree=None)
    if check:
        err = check_4_12(batch, model, F, probes=probes, seed=seed, general=out)
        if err > 1e-9 * max(1.0, d * batch.n):
            raise AssertionError(f"R_n - R*_n + d_n(rho_n - u_n) off by {err:.3e}")
    return out


def check_4_12(batch, model, F, probes=100, seed=0, general=None, *, relative=False):
    """max |R_n - R*_n + d_n(rho_n - u_n)| over seeded random probes.

    With ``relative=True`` the residual is divided by the largest magnitude
    among the three terms over the probes.
    """
    d = _d_of(model)
    rng = np.random.default_rng(seed)
    y = rng.uniform(0.01, 0.99, probes)
    t = rng.uniform(1.0 / batch.n, 1.0, probes)
    R = general if general is not None else r_general(batch, model, F, check=False)
    Rs = r_star(batch, model)
    rho = process_field(batch, "rho", model, F)
    u = process_field(batch, "u", model)
    r, rs, c = R(y, t), Rs(y, t), d * (rho(y, t) - u(y, t))
    err = float(np.max(np.abs(r - rs + c)))
    if relative:
        scale = max(np.max(np.abs(r)), np.max(np.abs(rs)), np.max(np.abs(c)))
        return err / scale if scale > 0 else err
    return err


def _vervaat_level(sec, k, s, d):
    d2 = sec.ftype(d) ** 2
    return 2 * sec.ftype(k) ** 2 / d2 * (sec.int_E(s) + sec.int_U(s) - s * s)


def vervaat(batch, model):
    """V_n(s, t) = 2 d_n^-2 [nt] int_0^s R*_n(y, t) dy, in closed form.

    Stationary points inside a cell are the zeros of R*, at
    y = (N + k Û)/(2k) with N the count of prefix points <= y.
    """
    d = _d_of(model)
    sec = batch.section

    def crit(k):
        sc = sec(k)
        mids = _cell_mids(sc.breaks())
        N = np.searchsorted(sc.s, mids, side="right")
        y = (N + k * sc.U(mids)) / (2.0 * k)
        return _keep_same_cell(y, mids, sc.breaks())

    return TwoParamField("vervaat", batch.n,
                         lambda k, s, side: _vervaat_level(sec(k), k, s, d),
                         lambda k: sec(k).breaks(), crit, degree=2, dtype=batch.dtype)


def vervaat_error(batch, model):
    """Q_n = V_n - alpha_n^2; stationary points at y = (2N + k Û)/(3k)."""
    d = _d_of(model)
    sec = batch.section

    def value(k, s, side):
        sc = sec(k)
        a = k * (sc.E(s, side) - s) / d
        return _vervaat_level(sc, k, s, d) - a * a

    def crit(k):
        sc = sec(k)
        mids = _cell_mids(sc.breaks())
        N = np.searchsorted(sc.s, mids, side="right")
        y = (2.0 * N + k * sc.U(mids)) / (3.0 * k)
        return _keep_same_cell(y, mids, sc.breaks())

    return TwoParamField("qerr", batch.n, value, lambda k: sec(k).breaks(), crit, degree=2,
                         dtype=batch.dtype)


def a_process(batch, model):
    """A_n(s, t) = 2 d_n^-1 [nt] int_{Û(s)}^{s} (alpha_n(y, t) - alpha_n(s, t)) dy.

    Written with I_E(x) = int_0^x Ê this is
    2 d^-2 k^2 [I_E(s) - I_E(Û) - (s^2 - Û^2)/2 - (Ê(s) - s)(s - Û)],
    quadratic in s on each cell with its stationary point at s = Û(s).
    """
    d = _d_of(model)
    sec = batch.section

    def value(k, s, side):
        sc = sec(k)
        uh = sc.U(s, side)
        e = sc.E(s, side)
        inner = sc.int_E(s) - sc.int_E(uh) - (s * s - uh * uh) / 2 - (e - s) * (s - uh)
        return 2 * sc.ftype(k) ** 2 / sc.ftype(d) ** 2 * inner

    def crit(k):
        sc = sec(k)
        mids = _cell_mids(sc.breaks())
        return _keep_same_cell(sc.U(mids), mids, sc.breaks())

    return TwoParamField("A", batch.n, value, lambda k: sec(k).breaks(), crit, degree=2,
                         dtype=batch.dtype)


def _cell_mids(b):
    edges = np.concatenate([[0.0], b, [1.0]])
    return 0.5 * (edges[:-1] + edges[1:])


def _keep_same_cell(y, mids, b):
    edges = np.concatenate([[0.0], b, [1.0]])
    cell_y = np.searchsorted(edges, y, side="right")
    cell_m = np.searchsorted(edges, mids, side="right")
    ok = (cell_y == cell_m) & (y > 0) & (y < 1)
    return y[ok]


def z_process(reduction, analysis, model, *, method="quad"):
    """Z_n(s, t) = 2 d^-2 V(s) int_0^1 (V(s - w V(s)/[nt]) - V(s)) dw.

    Arguments outside [0, 1] are clamped; J vanishes at both ends.  The
    w-integral uses adaptive quadrature (1e-10) and falls back to a
    64-point Gauss-Legendre rule if quadrature reports trouble.
    """
    d = _d_of(model)
    J = analysis.J
    gx, gw = np.polynomial.legendre.leggauss(64)
    gx, gw = 0.5 * (gx + 1.0), 0.5 * gw

    def one(s, k):
        S = reduction.S[k]
        v = float(J(s)) * S
        if v == 0.0:
            return 0.0
        c = v / k

        def integrand(w):
            return float(J(min(max(s - w * c, 0.0), 1.0))) * S - v

        val = None
        if method == "quad":
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10,
                                            limit=200)
                except integrate.IntegrationWarning:
                    val = None
        if val is None:
            # beyond the clamp point w* the argument sits at 0 or 1 where J = 0
            edge = 0.0 if c > 0 else 1.0
            w_star = min(1.0, (s - edge) / c)
            args = s - w_star * gx * c
            val = w_star * float(np.sum(gw * (np.asarray(J(args)) * S - v)))
            val -= (1.0 - w_star) * v
        return 2.0 / d ** 2 * v * val

    def value(k, y, side):
        return np.array([one(float(s), k) for s in y])

    return TwoParamField("Z", reduction.n, value, lambda k: np.zeros(0), degree=None)


@dataclass(frozen=True)
class VervaatBundle:
    """All derived fields of one sample plus its normalisation."""

    rstar: TwoParamField
    rgeneral: object
    vervaat: TwoParamField
    qerr: TwoParamField
    A: TwoParamField
    Z: object
    model: Model
    delta: float


def vervaat_bundle(batch, model, F=None, reduction=None, analysis=None):
    return VervaatBundle(
        rstar=r_star(batch, model),
        rgeneral=r_general(batch, model, F) if F is not None else None,
        vervaat=vervaat(batch, model),
        qerr=vervaat_error(batch, model),
        A=a_process(batch, model),
        Z=z_process(reduction, analysis, model) if reduction is not None else None,
        model=model,
        delta=delta_n(model.n, model.tau, model.D, model.L),
    )


def probe_points(batch, *, max_full=512, probes=200, seed=0):
    """Identity-check probes.

    All breakpoints (both sides) at every level when n <= max_full; else
    seeded random (y, t) probes plus the breakpoints of those levels.
    """
    n = batch.n
    if n <= max_full:
        ks = np.arange(1, n + 1)
    else:
        rng = np.random.default_rng(seed)
        ks = np.unique(rng.integers(1, n + 1, probes))
    out = []
    rng = np.random.default_rng(seed + 1)
    for k in ks:
        b = batch.section(k).breaks()
        if n > max_full and b.size > 64:
            b = rng.choice(b, 64, replace=False)
        y = np.concatenate([b, rng.uniform(0, 1, 4), [0.0, 1.0]])
        out.append((int(k), y))
    return out


def identity_residuals(batch, model, **kw):
    """Largest relative residuals of the exact identities on the probe set.

    Returns a dict with ``vervaat`` (Q = A - d^-2 R*^2) and ``rstar``
    (two forms of R*).  Both one-sided values at every breakpoint are
    probed.  Residuals at level k are divided by the largest magnitude of
    the field over that level's probes: Q vanishes at many points, where
    a pointwise ratio would only compare rounding noise.
    """
    d = _d_of(model)
    Q, A, Rs, Rd = (vervaat_error(batch, model), a_process(batch, model),
                    r_star(batch, model), r_star_definition(batch, model))
    tiny = np.finfo(float).tiny
    worst_q = worst_r = 0.0
    for k, y in probe_points(batch, **kw):
        err_q = err_r = scale_q = scale_r = 0.0
        for side in ("value", "left", "right"):
            q = Q.section(k, y, side)
            r = Rs.section(k, y, side)
            rhs = A.section(k, y, side) - r * r / d ** 2
            err_q = max(err_q, float(np.max(np.abs(q - rhs))))
            scale_q = max(scale_q, float(np.max(np.abs(q))), float(np.max(np.abs(rhs))))
            r2 = Rd.section(k, y, side)
            err_r = max(err_r, float(np.max(np.abs(r - r2))))
            scale_r = max(scale_r, float(np.max(np.abs(r))))
        worst_q = max(worst_q, err_q / max(scale_q, tiny))
        worst_r = max(worst_r, err_r / max(scale_r, tiny))
    return {"vervaat": worst_q, "rstar": worst_r}
