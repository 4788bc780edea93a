import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from lrdvervaat import _kernels as K
from lrdvervaat import distributions as dist
from lrdvervaat import hermite
from lrdvervaat import lrd_gauss as lg
from lrdvervaat.bk_vervaat import (
    Model, a_process, check_4_12, delta_n, identity_residuals, r_general, r_star,
    r_star_definition, reduction_field, vervaat, vervaat_bundle, vervaat_error, z_process,
)
from lrdvervaat.errors import InvalidSpec
from lrdvervaat.seq_processes import SampleBatch, process_field, sup_norm

samples = st.lists(st.floats(0.001, 0.999), min_size=2, max_size=20, unique=True)


def _batch(seed, n, G):
    path = lg.generate_path(lg.CovarianceSpec(0.4), n, seed)
    return path, SampleBatch.from_path(path.values, G)


class TestModel:
    def test_d(self):
        assert Model(256, 1, 0.4).d == pytest.approx(256 ** 0.8)
        assert Model(256, 1, 0.4, lg.ConstantL(2.0)).d == pytest.approx(256 ** 0.8 * 2 ** 0.5)

    def test_invalid(self):
        with pytest.raises(InvalidSpec):
            Model(10, 2, 0.5)

    def test_delta_n(self):
        assert delta_n(1000, 1, 0.4) == pytest.approx(1000 ** -0.4 * math.log(math.log(1000)))
        assert delta_n(1000, 2, 0.25) == pytest.approx(
            (1000 ** -0.25 * math.log(math.log(1000))) ** 2)
        # below 27 the loglog is pinned at loglog 27 > 1
        assert delta_n(5, 1, 0.4) == pytest.approx(5 ** -0.4 * math.log(math.log(27)))


class TestClosedForms:
    @given(samples, st.floats(0, 1), st.floats(0.05, 1))
    def test_rstar_two_forms(self, u, y, t):
        b = SampleBatch(u)
        assert r_star(b, 3.0)(y, t) == pytest.approx(r_star_definition(b, 3.0)(y, t), abs=1e-12)

    @given(samples, st.floats(0, 1))
    def test_vervaat_is_integral_of_rstar(self, u, s):
        b = SampleBatch(u)
        d = 1.7
        k = b.n
        rs = r_star(b, d)
        brk = [0.0] + [p for p in sorted(b.section(k).breaks()) if p < s] + [s]
        ref = sum(integrate.quad(lambda y: float(rs(y, 1.0)), a, c)[0] for a, c in zip(brk, brk[1:]))
        assert vervaat(b, d)(s, 1.0) == pytest.approx(2 * k * ref / d ** 2, abs=1e-10)

    @given(samples, st.floats(0, 1))
    def test_a_process_definition(self, u, s):
        b = SampleBatch(u)
        d = 1.3
        k = b.n
        alpha = process_field(b, "alpha", d)
        uh = float(b.section(k).U(s))
        a_s = float(alpha(s, 1.0))
        lo, hi = sorted((uh, s))
        brk = [lo] + [p for p in sorted(b.section(k).breaks()) if lo < p < hi] + [hi]
        ref = sum(integrate.quad(lambda y: float(alpha(y, 1.0)) - a_s, a, c)[0]
                  for a, c in zip(brk, brk[1:]))
        ref = ref if s >= uh else -ref
        assert a_process(b, d)(s, 1.0) == pytest.approx(2 * k * ref / d, abs=1e-10)

    @given(samples, st.floats(0, 1), st.floats(0.05, 1))
    def test_q_is_v_minus_alpha_squared(self, u, s, t):
        b = SampleBatch(u)
        v = vervaat(b, 2.0)(s, t)
        a = process_field(b, "alpha", 2.0)(s, t)
        assert vervaat_error(b, 2.0)(s, t) == pytest.approx(v - a * a, abs=1e-12)

    @given(samples, st.floats(0, 1), st.floats(0.05, 1))
    def test_vervaat_identity(self, u, s, t):
        b = SampleBatch(u)
        d = 2.5
        q = vervaat_error(b, d)(s, t)
        rhs = a_process(b, d)(s, t) - r_star(b, d)(s, t) ** 2 / d ** 2
        assert q == pytest.approx(rhs, abs=1e-12)

    @given(samples)
    def test_vervaat_zero_at_origin_and_nonnegative(self, u):
        b = SampleBatch(u)
        V = vervaat(b, 1.0)
        assert V(0.0, 1.0) == 0.0
        ys = np.linspace(0, 1, 101)
        assert np.all(V(ys, 1.0) >= -1e-12)

    @given(samples)
    def test_exact_sup_dominates_grid_for_quadratic(self, u):
        b = SampleBatch(u)
        Q = vervaat_error(b, 1.0)
        ys = np.linspace(0, 1, 4001)
        dense = max(np.max(np.abs(Q.section(k, ys))) for k in range(1, b.n + 1))
        assert sup_norm(Q) >= dense - 1e-12


class TestIdentities:
    def test_residuals_double_precision(self, qc_normal):
        G, _ = qc_normal
        _, b = _batch(5, 1024, G)
        res = identity_residuals(b, Model(1024, 1, 0.4))
        assert res["vervaat"] < 1e-9 and res["rstar"] < 1e-9

    def test_residuals_extended(self, qc_normal):
        G, _ = qc_normal
        path = lg.generate_path(lg.CovarianceSpec(0.4), 700, 9)
        b = SampleBatch.from_path(path.values, G, extended=True)
        res = identity_residuals(b, Model(700, 1, 0.4), max_full=256)
        assert res["vervaat"] < 1e-12

    @pytest.mark.parametrize("target", ["normal(0,1)", "exponential(1)", "uniform"])
    def test_general_reduction(self, target):
        G = hermite.SubordinationSpec("quantile-compose", target=dist.from_name(target))
        _, b = _batch(2, 512, G)
        m = Model(512, 1, 0.4)
        assert check_4_12(b, m, G.marginal(), relative=True) < 1e-9
        r_general(b, m, G.marginal())  # raises on failure

    def test_bundle(self, qc_normal, qc_analysis):
        G, F = qc_normal
        path, b = _batch(1, 64, G)
        bun = vervaat_bundle(b, Model(64, 1, 0.4), F, reduction_field(path, qc_analysis),
                             qc_analysis)
        assert bun.delta == pytest.approx(delta_n(64, 1, 0.4))
        assert bun.Z(0.3, 1.0) != 0.0


class TestReduction:
    def test_prefix_sums(self, qc_analysis):
        eta = np.array([0.5, -1.0, 2.0])
        red = reduction_field(eta, qc_analysis)
        assert np.allclose(red.S, [0.0, 0.5, -0.5, 1.5])
        assert red(0.3, 1.0) == pytest.approx(float(qc_analysis.J(0.3)) * 1.5)

    def test_square_uses_h2_over_2(self):
        an = hermite.analyze(hermite.SubordinationSpec("square"))
        red = reduction_field(np.array([2.0, 0.0]), an)
        assert np.allclose(red.S, [0.0, 1.5, 1.0])

    def test_z_against_quadrature(self, qc_analysis):
        eta = np.array([0.9, 1.4, -0.2, 0.7])
        red = reduction_field(eta, qc_analysis)
        d = 3.0
        Z = z_process(red, qc_analysis, d)
        J = qc_analysis.J
        for s in (0.2, 0.6, 0.85):
            k, S = 4, red.S[4]
            v = float(J(s)) * S
            ref = integrate.quad(lambda w: float(J(min(max(s - w * v / k, 0), 1))) * S - v,
                                 0, 1, epsabs=1e-13)[0]
            assert Z(s, 1.0) == pytest.approx(2 / d ** 2 * v * ref, abs=1e-10)
            assert z_process(red, qc_analysis, d, method="gauss")(s, 1.0) == pytest.approx(
                Z(s, 1.0), abs=1e-8)


KERNEL_GRID = np.array([15, 30, 60])


@pytest.fixture(scope="module")
def setup(qc_normal, qc_analysis):
    G, F = qc_normal
    path, b = _batch(3, 60, G)
    red = reduction_field(path, qc_analysis)
    dn = [Model(int(m), 1, 0.4).d for m in KERNEL_GRID]
    dl = [delta_n(int(m), 1, 0.4) for m in KERNEL_GRID]
    out = K.coupling_sweep(b.U, b.X, red.S, KERNEL_GRID, dn, dl, qc_analysis, F,
                           metrics=K.METRICS)
    return b, red, dn, dl, out, qc_analysis, F


class TestCouplingKernel:
    """The compiled sweep against a brute-force evaluation on small n."""

    n_grid = KERNEL_GRID

    def _brute(self, setup, gi):
        b, red, dn, dl, _, an, F = setup
        m = int(self.n_grid[gi])
        bb = SampleBatch(b.U[:m], b.X[:m])
        ys = np.linspace(1e-9, 1 - 1e-9, 4001)
        best = np.zeros(4)
        for k in range(1, m + 1):
            sec = bb.section(k)
            S = red.S[k]
            pts = np.concatenate([ys, sec.breaks()])
            J, Jp = an.J(pts), an.Jprime(pts)
            for side in ("left", "right"):
                a = k * (sec.E(pts, side) - pts) - J * S
                u = k * (pts - sec.U(pts, side)) - J * S
                r = k * k * (sec.E(pts, side) + sec.U(pts, side) - 2 * pts) - J * Jp * S * S
                w = (pts >= dl[gi]) & (pts <= 1 - dl[gi])
                rho = F.fQ(pts) * k * (F.Q(pts) - sec.Xq(pts, side)) - J * S
                best = np.maximum(best, [np.abs(a).max(), np.abs(u).max(), np.abs(r).max(),
                                         np.abs(rho[w]).max()])
        d = dn[gi]
        gc = float(np.max(np.abs(bb.section(m).U(ys) - ys)))
        return best / [d, d, d * d, d], gc

    @pytest.mark.parametrize("gi", [0, 1, 2])
    def test_matches_brute_force(self, setup, gi):
        out = setup[4]
        ref, gc = self._brute(setup, gi)
        # exact rows (cor21, prop22, thm22) agree; the dense grid can only be lower
        assert np.all(out[:3, gi] >= ref[:3] - 1e-9)
        assert np.allclose(out[:3, gi], ref[:3], rtol=2e-3)
        assert out[3, gi] >= ref[3] * (1 - 2e-3)
        assert out[4, gi] >= gc - 1e-12
        assert out[4, gi] == pytest.approx(gc, abs=1e-3)

    def test_running_maximum(self, setup):
        out = setup[4]
        dn = np.array(setup[2])
        assert np.all(np.diff(out[0] * dn) >= -1e-12)

    def test_disabled_rows_zero(self, setup):
        b, red, dn, dl, _, an, F = setup
        out = K.coupling_sweep(b.U, b.X, red.S, self.n_grid, dn, dl, an, F, metrics=("cor21",))
        assert np.all(out[1:4] == 0)
        assert np.array_equal(out[0], setup[4][0])


class TestInverseNormal:
    @given(st.floats(1e-300, 1 - 1e-16))
    def test_compiled_quantile_matches_scipy(self, p):
        from scipy.special import ndtri
        ref = ndtri(p)
        assert K.ppnd16(p) == pytest.approx(ref, rel=1e-14, abs=1e-14)
