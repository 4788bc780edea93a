import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from lrdvervaat import distributions as dist
from lrdvervaat.errors import InvalidSpec

LAWS = {
    "uniform": (dist.uniform(), stats.uniform()),
    "exponential(2)": (dist.exponential(2.0), stats.expon(scale=0.5)),
    "normal(1,3)": (dist.normal(1.0, 3.0), stats.norm(1.0, 3.0)),
    "chi2": (dist.chi_square1(), stats.chi2(1)),
    "halfnormal": (dist.half_normal(), stats.halfnorm()),
    "pareto(1.5)": (dist.pareto(1.5), stats.pareto(1.5)),
}


class TestLaws:
    @pytest.mark.parametrize("name", sorted(LAWS))
    def test_against_scipy(self, name):
        ours, ref = LAWS[name]
        y = np.linspace(0.01, 0.99, 23)
        x = ref.ppf(y)
        assert np.allclose(ours.Q(y), x, rtol=1e-10)
        assert np.allclose(ours.F(x), y, atol=1e-12)
        assert np.allclose(ours.f(x), ref.pdf(x), rtol=1e-9)

    @pytest.mark.parametrize("name", sorted(LAWS))
    def test_fprime_by_finite_difference(self, name):
        ours, ref = LAWS[name]
        x = ref.ppf(np.array([0.2, 0.5, 0.8]))
        h = 1e-6
        fd = (ours.f(x + h) - ours.f(x - h)) / (2 * h)
        assert np.allclose(ours.fprime(x), fd, rtol=1e-5, atol=1e-8)

    @given(st.floats(1e-6, 1 - 1e-6))
    def test_roundtrip_property(self, y):
        for ours, _ in LAWS.values():
            assert float(ours.F(ours.Q(y))) == pytest.approx(y, abs=1e-9)

    def test_quantile_roundtrip_report(self):
        rep = dist.quantile_roundtrip(dist.exponential(), np.linspace(0.01, 0.99, 50),
                                      np.linspace(0.1, 5, 50))
        assert rep["max_F_of_Q"] < 1e-12 and rep["max_Q_of_F"] < 1e-10

    def test_fQ_zero_at_infinite_end(self):
        assert dist.normal().fQ(0.0) == 0.0
        assert dist.exponential().fQ(1.0) == 0.0
        assert dist.uniform().fQ(0.5) == 1.0

    def test_from_name(self):
        assert dist.from_name("normal(0,1)").describe() == "normal(0,1)"
        assert dist.from_name("Exponential(2)").params == (2.0,)
        assert dist.from_name("uniform").describe() == "uniform"

    @pytest.mark.parametrize("bad", ["gamma(2)", "normal(a)", "normal(0,1,2)", "(("])
    def test_from_name_errors(self, bad):
        with pytest.raises(InvalidSpec):
            dist.from_name(bad)

    def test_tabulated(self):
        t = dist.tabulated([0.0, 1.0, 3.0], [0.0, 0.5, 1.0])
        assert float(t.Q(0.75)) == pytest.approx(2.0)
        assert float(t.f(2.0)) == pytest.approx(0.25)

    @pytest.mark.parametrize("xs,ps", [([0, 1], [0.1, 1]), ([0, 0], [0, 1]), ([0, 1, 2], [0, 1])])
    def test_tabulated_invalid(self, xs, ps):
        with pytest.raises(InvalidSpec):
            dist.tabulated(xs, ps)


class TestConditions:
    def test_uniform_passes_with_v(self):
        rep = dist.check_conditions(dist.uniform(), 1, 0.4)
        assert rep.gamma_hat == 0.0
        assert rep.satisfies_i_through_iii
        assert rep.v_variant == "v"

    def test_exponential_sup_tends_to_one(self):
        rep = dist.check_conditions(dist.exponential(), 1, 0.4)
        assert rep.gamma_hat == pytest.approx(1.0, abs=1e-9)
        assert rep.gamma_hat < 1.0 + 0.4 / (2 - 0.8)
        assert rep.cond_iii

    def test_pareto_fails_iii(self):
        # y(1-y)|f'|/f^2 = y (alpha + 1)/alpha, sup = 2 at alpha = 1
        rep = dist.check_conditions(dist.pareto(1.0), 1, 0.4)
        assert rep.gamma_hat == pytest.approx(2.0, rel=1e-6)
        assert not rep.cond_iii

    def test_bound_formula(self):
        rep = dist.check_conditions(dist.normal(), 2, 0.25)
        assert rep.gamma_bound == pytest.approx(1 + 0.5 / (2 - 1.0))
        assert rep.gamma_is_lower_bound

    @given(st.floats(0.5, 5.0))
    def test_pareto_gamma_closed_form(self, alpha):
        rep = dist.check_conditions(dist.pareto(alpha), 1, 0.4, grid_size=513)
        assert rep.gamma_hat == pytest.approx((alpha + 1) / alpha, rel=1e-5)

    def test_grid_refinement_never_lowers(self):
        a = dist.check_conditions(dist.normal(), 1, 0.4, grid_size=257)
        b = dist.check_conditions(dist.normal(), 1, 0.4, grid_size=513)
        assert b.gamma_hat >= a.gamma_hat - 1e-12

    def test_normal_density_quantile_vanishes_at_ends(self):
        rep = dist.check_conditions(dist.normal(), 1, 0.4)
        assert rep.A_limit == 0 and rep.B_limit == 0
        assert math.isfinite(rep.gamma_hat)
