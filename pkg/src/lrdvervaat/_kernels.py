"""Compiled sweeps for the coupling metrics.

One pass over k = 1..n inserts U_k into a sorted prefix and evaluates, at
every level, the exact supremum in y of

* cor21   |k(Ê - y) - J(y) S_k|
* prop22  |k(y - Û) - J(y) S_k|
* thm22   |k^2 (Ê + Û - 2y) - J J'(y) S_k^2|
* prop42  |f(Q(y)) k (Q(y) - Q̂(y)) - J(y) S_k|   on nested windows

Candidates are the breakpoints (with both one-sided limits), the ends of
[0, 1] and the interior zeros of the y-derivative.  The prop42 field is
not polynomial between breakpoints; its sup is taken over cell ends and
window ends only, so it is a lower bound.

Running maxima over k <= n are recorded at each n of the grid, which
gives the sup over t of the prefix-coupled path for every n in one pass.
"""
from functools import lru_cache
import math

import numpy as np
from numba import njit

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
Y_MIN = 1e-12

METRICS = ("cor21", "prop22", "thm22", "prop42", "gc_rate")


@njit(inline="always")
def ppnd16(p):
    """Wichura's AS241 inverse normal CDF, accurate to about 1e-16."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608) / (((((((5226.495278852545925 * r
                + 28729.085735721942674) * r + 39307.89580009271061) * r + 21213.794301586595867) * r
                + 5394.1960214247511077) * r + 687.1870074920579083) * r + 42.313330701600911252) * r + 1.0)
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        v = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
               + 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r
               + 4.6303378461565452959) * r + 1.42343711074968357734) / (((((((1.05075007164441684324e-9 * r
               + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
               + 0.68976733498510000455) * r + 1.6763848301838038494) * r + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
               + 0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r
               + 5.4637849111641143699) * r + 6.6579046435011037772) / (((((((2.04426310338993978564e-15 * r
               + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
               + 0.0148753612908506148525) * r + 0.13692988092273580531) * r + 0.59983220655588793769) * r + 1.0)
    return -v if q < 0 else v


ndtri = ppnd16


@njit(cache=False)
def _phi(x):
    return _INV_SQRT2PI * math.exp(-0.5 * x * x)


@njit(cache=False)
def _ndtr(x):
    return 0.5 * math.erfc(-x / _SQRT2)


def family_key(analysis, F):
    """Hashable description of (J, F) used to pick a compiled evaluator."""
    spec = analysis.spec
    if spec.name in ("identity", "quantile-compose") and analysis.tau == 1:
        if F.name == "normal":
            mu, sigma = F.params or (0.0, 1.0)
            return ("qc", "normal", float(mu), float(sigma))
        if F.name == "exponential":
            return ("qc", "exponential", float(F.params[0]), 0.0)
        if F.name == "uniform":
            lo, hi = F.params or (0.0, 1.0)
            return ("qc", "uniform", float(lo), float(hi))
    if spec.name == "square" and analysis.tau == 2 and F.name == "chi2":
        return ("sq", "chi2", 0.0, 0.0)
    if spec.name == "absolute" and analysis.tau == 2 and F.name == "halfnormal":
        return ("sq", "halfnormal", 0.0, 0.0)
    return None


def _make_qc(marg, p1, p2):
    mcode = {"normal": 0, "exponential": 1, "uniform": 2}[marg]

    @njit
    def yeval(y):
        if y <= 0.0 or y >= 1.0:
            s = -1.0 if y <= 0.0 else 1.0
            return 0.0, s * np.inf, np.inf, np.nan, 0.0
        q = ndtri(y)
        ph = _phi(q)
        if mcode == 0:
            Q = p1 + p2 * q
            fQ = ph / p2
        elif mcode == 1:
            Q = -math.log1p(-y) / p1
            fQ = p1 * (1.0 - y)
        else:
            Q = p1 + (p2 - p1) * y
            fQ = 1.0 / (p2 - p1)
        return -ph, q, 1.0 / ph, Q, fQ

    @njit
    def roots(kind, c, out):
        # kind 0: J' = c ; kind 1: (J J')' = q^2 - 1 = c
        if kind == 0:
            out[0] = _ndtr(c)
            return 1
        if c < -1.0:
            return 0
        r = math.sqrt(1.0 + c)
        out[0] = _ndtr(-r)
        out[1] = _ndtr(r)
        return 2

    return yeval, roots


def _make_sq(marg):
    mcode = {"chi2": 0, "halfnormal": 1}[marg]

    @njit
    def yeval(y):
        if y <= 0.0:
            return 0.0, -1.0, 0.0, 0.0, np.inf if mcode == 0 else 2.0 * _INV_SQRT2PI
        if y >= 1.0:
            return 0.0, np.inf, np.inf, np.inf, 0.0
        a = ndtri(0.5 * (1.0 + y))
        ph = _phi(a)
        if mcode == 0:
            Q = a * a
            fQ = ph / a if a > 0 else np.inf
        else:
            Q = a
            fQ = 2.0 * ph
        return -2.0 * a * ph, a * a - 1.0, a / ph, Q, fQ

    @njit
    def roots(kind, c, out):
        if kind == 0:
            if c < -1.0:
                return 0
            out[0] = math.erf(math.sqrt(1.0 + c) / _SQRT2)
            return 1
        # (J J')' = b^2 - 4b + 1 with b = a^2
        disc = 3.0 + c
        if disc < 0:
            return 0
        m = 0
        for sgn in (-1.0, 1.0):
            b = 2.0 + sgn * math.sqrt(disc)
            if b >= 0:
                out[m] = math.erf(math.sqrt(b) / _SQRT2)
                m += 1
        return m

    return yeval, roots


def _make_table(analysis, F, size=2 ** 14 + 1):
    """Interpolated evaluator for families without closed forms."""
    yg = np.linspace(0.0, 1.0, size)
    inner = yg[1:-1]
    J = np.concatenate([[0.0], np.asarray(analysis.J(inner), float), [0.0]])
    d1 = np.asarray(analysis.Jprime(inner), float)
    d2 = np.asarray(analysis.Jsecond(inner), float)
    Jp = np.concatenate([[d1[0]], d1, [d1[-1]]])
    Jpp = np.concatenate([[d2[0]], d2, [d2[-1]]])
    with np.errstate(all="ignore"):
        Q = np.asarray(F.Q(yg), float)
        fQ = np.asarray(F.fQ(yg), float)
    h0 = Jp.copy()
    h1 = Jp * Jp + J * Jpp
    step = 1.0 / (size - 1)

    @njit
    def _interp(tab, y):
        x = y / step
        i = int(x)
        if i >= size - 1:
            return tab[size - 1]
        w = x - i
        return (1.0 - w) * tab[i] + w * tab[i + 1]

    @njit
    def yeval(y):
        if y <= 0.0 or y >= 1.0:
            return 0.0, _interp(Jp, y), _interp(Jpp, y), _interp(Q, y), 0.0
        return (_interp(J, y), _interp(Jp, y), _interp(Jpp, y), _interp(Q, y),
                _interp(fQ, y))

    @njit
    def roots(kind, c, out):
        h = h0 if kind == 0 else h1
        m = 0
        for i in range(1, size - 2):
            a = h[i] - c
            b = h[i + 1] - c
            if a == 0.0 or a * b < 0:
                if m < out.size:
                    w = 0.0 if a == 0.0 else a / (a - b)
                    out[m] = (i + w) * step
                    m += 1
        return m

    return yeval, roots


def make_evaluators(analysis, F):
    """(yeval, roots, key) compiled for this (J, F) pair."""
    key = family_key(analysis, F)
    if key is None:
        y, r = _make_table(analysis, F)
        return y, r, None
    return _cached_evaluators(key) + (key,)


@lru_cache(maxsize=16)
def _cached_evaluators(key):
    if key[0] == "qc":
        return _make_qc(key[1], key[2], key[3])
    return _make_sq(key[1])


@lru_cache(maxsize=16)
def _sweep_for(yeval, roots):
    @njit
    def sweep(U, X, S, n_grid, dn, delta, flags):
        n = n_grid[n_grid.size - 1]
        G = n_grid.size
        su = np.empty(n)
        sx = np.empty(n)
        ju = np.empty(n)
        jju = np.empty(n)
        out = np.zeros((5, G))
        run = np.zeros(3)
        run42 = np.zeros(G)
        b42 = np.zeros(G)
        rbuf = np.empty(8)
        g = 0
        for k in range(1, n + 1):
            u = U[k - 1]
            # insertion into the sorted prefix
            lo, hi = 0, k - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if su[mid] <= u:
                    lo = mid + 1
                else:
                    hi = mid
            pos = lo
            for i in range(k - 1, pos, -1):
                su[i] = su[i - 1]
                sx[i] = sx[i - 1]
                ju[i] = ju[i - 1]
                jju[i] = jju[i - 1]
            J, Jp, Jpp, Qv, fQ = yeval(u)
            su[pos] = u
            sx[pos] = X[k - 1]
            ju[pos] = J
            jju[pos] = J * Jp if J != 0.0 else 0.0
            Sk = S[k]
            kf = float(k)
            m1 = 0.0
            m2 = 0.0
            m3 = 0.0
            for gg in range(G):
                b42[gg] = 0.0

            # breakpoints at the order statistics
            if flags[0] or flags[2]:
                for i in range(k):
                    y = su[i]
                    if flags[0]:
                        base = -kf * y - ju[i] * Sk
                        v = abs(i + 1 + base)
                        if v > m1:
                            m1 = v
                        v = abs(i + base)
                        if v > m1:
                            m1 = v
                    if flags[2]:
                        idx = int(math.ceil(y * kf)) - 1
                        if idx < 0:
                            idx = 0
                        if idx > k - 1:
                            idx = k - 1
                        base = kf * (kf * su[idx] - 2.0 * kf * y) - jju[i] * Sk * Sk
                        v = abs(kf * (i + 1) + base)
                        if v > m3:
                            m3 = v
                        v = abs(kf * i + base)
                        if v > m3:
                            m3 = v

            # ends of [0, 1]
            if flags[1]:
                m2 = max(m2, abs(kf * su[0]), abs(kf * (1.0 - su[k - 1])))
            if flags[2]:
                m3 = max(m3, abs(kf * kf * su[0]), abs(kf * (kf * su[k - 1] - kf)))

            # grid breakpoints j/k
            if flags[1] or flags[2] or flags[3]:
                cl = 0
                cr = 0
                for j in range(1, k):
                    y = j / kf
                    while cl < k and su[cl] < y:
                        cl += 1
                    if cr < cl:
                        cr = cl
                    while cr < k and su[cr] <= y:
                        cr += 1
                    J, Jp, Jpp, Qv, fQ = yeval(y)
                    VS = J * Sk
                    if flags[1]:
                        v = abs(j - kf * su[j - 1] - VS)
                        if v > m2:
                            m2 = v
                        v = abs(j - kf * su[j] - VS)
                        if v > m2:
                            m2 = v
                    if flags[2]:
                        jj = J * Jp * Sk * Sk
                        v = abs(kf * (cl + kf * su[j - 1] - 2.0 * j) - jj)
                        if v > m3:
                            m3 = v
                        v = abs(kf * (cr + kf * su[j] - 2.0 * j) - jj)
                        if v > m3:
                            m3 = v
                    if flags[3]:
                        if fQ > 0.0:
                            rl = abs(fQ * kf * (Qv - sx[j - 1]) - VS)
                            rr = abs(fQ * kf * (Qv - sx[j]) - VS)
                        else:
                            rl = abs(VS)
                            rr = rl
                        if rr > rl:
                            rl = rr
                        for gg in range(G):
                            if delta[gg] <= y <= 1.0 - delta[gg] and rl > b42[gg]:
                                b42[gg] = rl

            # window ends for the trimmed metric
            if flags[3]:
                for gg in range(G):
                    for e in range(2):
                        y = delta[gg] if e == 0 else 1.0 - delta[gg]
                        if not (0.0 < y < 1.0):
                            continue
                        J, Jp, Jpp, Qv, fQ = yeval(y)
                        idx = int(math.ceil(y * kf)) - 1
                        if idx < 0:
                            idx = 0
                        if idx > k - 1:
                            idx = k - 1
                        v = abs(fQ * kf * (Qv - sx[idx]) - J * Sk) if fQ > 0 else abs(J * Sk)
                        for g2 in range(G):
                            if delta[g2] <= y <= 1.0 - delta[g2] and v > b42[g2]:
                                b42[g2] = v

            # interior stationary points
            if Sk != 0.0:
                for which in range(3):
                    if not flags[which]:
                        continue
                    if which == 0:
                        m = roots(0, -kf / Sk, rbuf)
                    elif which == 1:
                        m = roots(0, kf / Sk, rbuf)
                    else:
                        m = roots(1, -2.0 * kf * kf / (Sk * Sk), rbuf)
                    for r in range(m):
                        y = rbuf[r]
                        if not (Y_MIN <= y <= 1.0 - Y_MIN):
                            continue
                        J, Jp, Jpp, Qv, fQ = yeval(y)
                        lo, hi = 0, k
                        while lo < hi:
                            mid = (lo + hi) // 2
                            if su[mid] <= y:
                                lo = mid + 1
                            else:
                                hi = mid
                        c = lo
                        idx = int(math.ceil(y * kf)) - 1
                        if idx < 0:
                            idx = 0
                        if idx > k - 1:
                            idx = k - 1
                        if which == 0:
                            v = abs(c - kf * y - J * Sk)
                            if v > m1:
                                m1 = v
                        elif which == 1:
                            v = abs(kf * y - kf * su[idx] - J * Sk)
                            if v > m2:
                                m2 = v
                        else:
                            v = abs(kf * (c + kf * su[idx] - 2.0 * kf * y) - J * Jp * Sk * Sk)
                            if v > m3:
                                m3 = v

            if m1 > run[0]:
                run[0] = m1
            if m2 > run[1]:
                run[1] = m2
            if m3 > run[2]:
                run[2] = m3
            for gg in range(G):
                if b42[gg] > run42[gg]:
                    run42[gg] = b42[gg]

            if g < G and k == n_grid[g]:
                out[0, g] = run[0] / dn[g]
                out[1, g] = run[1] / dn[g]
                out[2, g] = run[2] / (dn[g] * dn[g])
                out[3, g] = run42[g] / dn[g]
                gc = 0.0
                for j in range(1, k + 1):
                    v = max(abs(su[j - 1] - (j - 1) / kf), abs(su[j - 1] - j / kf))
                    if v > gc:
                        gc = v
                out[4, g] = gc
                g += 1
        return out

    return sweep


def coupling_sweep(U, X, S, n_grid, dn, delta, analysis, F, metrics=METRICS[:4],
                   evaluators=None):
    """Run the compiled sweep; returns an array (5, len(n_grid)).

    Rows follow :data:`METRICS`; disabled rows are zero.
    """
    if evaluators is None:
        evaluators = make_evaluators(analysis, F)
    yeval, roots = evaluators[0], evaluators[1]
    sweep = _sweep_for(yeval, roots)
    flags = np.array([m in metrics for m in METRICS[:4]], dtype=np.bool_)
    n_grid = np.asarray(n_grid, dtype=np.int64)
    return sweep(np.ascontiguousarray(U, dtype=np.float64),
                 np.ascontiguousarray(X, dtype=np.float64),
                 np.ascontiguousarray(S, dtype=np.float64),
                 n_grid, np.asarray(dn, dtype=np.float64),
                 np.asarray(delta, dtype=np.float64), flags)
