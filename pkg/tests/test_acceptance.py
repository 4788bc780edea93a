"""Acceptance criteria, one recorded PASS/FAIL line per criterion.

Run on its own with ``pytest tests/test_acceptance.py -s`` (the lines are
also repeated in the terminal summary).  The coupled rate run dominates:
about 11 minutes on one core at 100 replications.
"""
import math
import os
import sys
import time

import numpy as np
import pytest
from scipy import stats

from lrdvervaat import cli
from lrdvervaat import distributions as dist
from lrdvervaat import experiments as ex
from lrdvervaat import hermite
from lrdvervaat import limit_processes as lp
from lrdvervaat import lrd_gauss as lg
from lrdvervaat.bk_vervaat import Model, check_4_12, identity_residuals
from lrdvervaat.seq_processes import SampleBatch

MASTER = 20240601
WORKERS = os.cpu_count() or 1
TAU, D = 1, 0.4


def _z(mean, se, target):
    return (np.asarray(mean) - target) / np.asarray(se)


@pytest.fixture(scope="module")
def identity_paths(qc_normal):
    """The 50 seeded driver paths of criteria 1 and 2, as extended-precision batches."""
    G, _ = qc_normal
    spec = lg.CovarianceSpec(D)
    t0 = time.perf_counter()
    batches = []
    for r in range(50):
        path = lg.generate_path(spec, 4096, ex.replication_seed(MASTER, ex.STREAM_DRIVER, r))
        batches.append(SampleBatch.from_path(path.values, G, extended=True))
    return batches, time.perf_counter() - t0


class TestIdentities:
    def test_criterion_1_vervaat_identity(self, identity_paths, acceptance):
        batches, t_gen = identity_paths
        model = Model(4096, TAU, D)
        t0 = time.perf_counter()
        worst = max(identity_residuals(b, model)["vervaat"] for b in batches)
        elapsed = t_gen + time.perf_counter() - t0
        ok = worst <= 1e-9 and elapsed <= 120
        acceptance("1", ok, f"max rel. residual {worst:.3e} (<= 1e-9), {elapsed:.1f}s (<= 120s)")
        assert ok

    def test_criterion_2_rstar_and_reduction(self, identity_paths, qc_normal, acceptance):
        batches, _ = identity_paths
        _, F = qc_normal
        model = Model(4096, TAU, D)
        t0 = time.perf_counter()
        two_form = max(identity_residuals(b, model)["rstar"] for b in batches)
        reduction = max(float(check_4_12(b, model, F, relative=True)) for b in batches)
        elapsed = time.perf_counter() - t0
        ok = two_form <= 1e-9 and reduction <= 1e-9 and elapsed <= 60
        acceptance("2", ok, f"R* two-form {two_form:.3e}, (4.12) {reduction:.3e} (<= 1e-9), "
                            f"{elapsed:.1f}s (<= 60s)")
        assert ok


class TestHermiteLayer:
    SPECS = [
        hermite.SubordinationSpec("identity"),
        hermite.SubordinationSpec("square"),
        hermite.SubordinationSpec("absolute"),
        hermite.SubordinationSpec("quantile-compose", target=dist.normal()),
        hermite.SubordinationSpec("quantile-compose", target=dist.from_name("exponential(1)")),
    ]

    def test_criterion_3(self, qc_analysis, acceptance):
        ranks = {name: hermite.hermite_rank(hermite.SubordinationSpec(name))
                 for name in ("identity", "square", "absolute")}
        ranks_ok = ranks == {"identity": 1, "square": 2, "absolute": 2}

        target = (1 / math.sqrt(2 * math.pi), 1 / math.sqrt(2 * math.pi * math.e),
                  1 / (2 * math.pi * math.sqrt(2 * math.e)))
        kappa_err = max(abs(a - b) for a, b in zip(qc_analysis.kappas, target))

        gap, ratio = 0.0, 0.0
        for spec in self.SPECS:
            xs = spec.marginal().Q(np.linspace(0.05, 0.95, 9))
            for l in range(1, 7):
                for x in xs:
                    closed = float(hermite.coefficient_c(spec, None, l, x))
                    gap = max(gap, abs(closed - hermite.coefficient_c_quad(spec, l, x)))
                    ratio = max(ratio, abs(closed) / math.factorial(l))
        ok = ranks_ok and kappa_err <= 1e-6 and gap <= 1e-8 and ratio <= 1
        acceptance("3", ok, f"ranks {ranks}, kappa err {kappa_err:.1e}, closed vs quad "
                            f"{gap:.1e}, max |c_l|/l! {ratio:.3f}")
        assert ok


def _acov_stats(paths, lags):
    """Per-lag MC mean and s.e. of the zero-mean sample autocovariance."""
    n = paths.shape[1]
    est = np.stack([np.einsum("ij,ij->i", paths[:, : n - k], paths[:, k:]) / (n - k)
                    for k in lags], axis=1)
    return est.mean(axis=0), est.std(axis=0, ddof=1) / math.sqrt(paths.shape[0])


def _generator_checks(spec, reps, n, target_acov, target_var):
    paths = np.stack([lg.generate_path(spec, n, ex.replication_seed(MASTER, ex.STREAM_DRIVER, r))
                      .values for r in range(reps)])
    lags = np.arange(21)
    mean, se = _acov_stats(paths, lags)
    z_acov = _z(mean, se, target_acov(lags))
    sums = paths.sum(axis=1)
    v = sums.var(ddof=1)
    z_var = _z(v, v * math.sqrt(2 / (reps - 1)), target_var)
    return np.asarray(z_acov), float(z_var)


class TestGeneratorFidelity:
    REPS, N = 2000, 4096

    def test_criterion_4(self, acceptance):
        t0 = time.perf_counter()
        spec = lg.CovarianceSpec(D)
        z_acov, z_var = _generator_checks(
            spec, self.REPS, self.N, lambda k: lg.autocovariance(spec, k),
            lg.partial_sum_variance(spec, self.N))

        H = 0.8
        y = np.stack([lp.simulate_fbm(H, self.N, ex.replication_seed(MASTER, ex.STREAM_LIMIT, r)).Y
                      for r in range(self.REPS)])
        prod = y[:, self.N // 2] * y[:, -1]
        cov_target = 0.5 * (0.5 ** (2 * H) + 1 - 0.5 ** (2 * H))
        z_fbm = _z(prod.mean(), prod.std(ddof=1) / math.sqrt(self.REPS), cov_target)
        elapsed = time.perf_counter() - t0

        worst = int(np.argmax(np.abs(z_acov)))
        ok = (np.all(np.abs(z_acov) <= 3) and abs(z_var) <= 3 and abs(z_fbm) <= 3
              and elapsed <= 300)
        acceptance("4", ok, f"pure-power L=1: worst acov z {z_acov[worst]:+.1f} at lag {worst}, "
                            f"variance z {z_var:+.2f}, fBm cov z {z_fbm:+.2f}, {elapsed:.0f}s")

        # supplementary diagnostics: the repaired covariance actually sampled,
        # and the fGn-matched family whose covariance is positive definite
        real = lg.realized_autocovariance(spec, self.N)
        zr, zrv = _generator_checks(spec, self.REPS, self.N, lambda k: real[k],
                                    lg.hermite_sum_variance(spec, self.N, 1, real))
        acceptance("4", "info", f"pure-power vs realized covariance: max |acov z| "
                                f"{np.abs(zr).max():.2f}, variance z {zrv:+.2f}")
        fgn = lg.CovarianceSpec(D, family="fgn-matched")
        zf, zfv = _generator_checks(fgn, self.REPS, self.N, lambda k: lg.autocovariance(fgn, k),
                                    lg.partial_sum_variance(fgn, self.N))
        acceptance("4", "info", f"fgn-matched vs nominal covariance: max |acov z| "
                                f"{np.abs(zf).max():.2f}, variance z {zfv:+.2f}")
        assert ok


@pytest.fixture(scope="module")
def coupling_run():
    plan = ex.ExperimentPlan(tau=TAU, D=D, n_grid=tuple(2 ** j for j in range(8, 15)),
                             replications=100, master_seed=MASTER, workers=WORKERS)
    t0 = time.perf_counter()
    report = ex.run_coupling(plan)
    return report, time.perf_counter() - t0


class TestCoupledRates:
    def test_criterion_5(self, coupling_run, acceptance):
        rep, elapsed = coupling_run
        s21, s22, s42 = (rep.slope(m)[1] for m in ("cor21", "prop22", "prop42"))
        med22 = np.asarray(rep.medians("thm22"))
        decreasing = bool(np.all(np.diff(med22) < 0))
        ok = (s21 < -0.05 and -0.35 <= s22 <= -0.05 and decreasing and s42 < -0.05
              and elapsed <= 1800)
        acceptance("5", ok, f"cor21 {s21:+.3f}, prop22 {s22:+.3f}, thm22 medians decreasing "
                            f"{decreasing}, prop42 {s42:+.3f}, {elapsed / 60:.1f} min")
        assert ok

    def test_criterion_6(self, coupling_run, acceptance):
        rep, _ = coupling_run
        s = rep.slope("gc_rate")[1]
        ok = -0.35 <= s <= -0.05
        acceptance("6", ok, f"GC slope {s:+.3f} in [-0.35, -0.05] (target -0.2)")
        assert ok


@pytest.fixture(scope="module")
def distribution_plan():
    return ex.ExperimentPlan(tau=TAU, D=D, n_grid=(2 ** 14,), replications=500,
                             master_seed=MASTER, metrics=ex.DIST_METRICS, probe=(0.8, 1.0),
                             workers=WORKERS)


@pytest.fixture(scope="module")
def distribution_run(distribution_plan):
    return ex.run_distribution(distribution_plan)


class TestLimitDistributions:
    def test_criterion_7(self, distribution_run, distribution_plan, acceptance):
        ks, thr, verdict = distribution_run.dist_row("thm23_dist")[1:]
        half = ex.run_distribution(ex.ExperimentPlan(
            tau=TAU, D=D, n_grid=(2 ** 12,), replications=50, master_seed=MASTER,
            metrics=("thm23_dist",), probe=(0.5, 1.0), limit_mt=16))
        flagged = half.dist_row("thm23_dist")[3] == "degenerate"
        ok = verdict is True and flagged
        acceptance("7", ok, f"KS {ks:.3f} (<= {thr}), y=0.5 flagged degenerate {flagged}")
        assert ok

    def test_criterion_8(self, distribution_run, distribution_plan, qc_analysis, acceptance):
        kv, _, okv = distribution_run.dist_row("thm31_dist")[1:]
        kq, _, okq = distribution_run.dist_row("thm32_dist")[1:]
        xs, ys = distribution_run.samples["thm32_dist"]
        y0 = distribution_plan.probe[0]
        lead = float(qc_analysis.J(y0)) ** 2 * float(qc_analysis.Jprime(y0))
        limit_y1 = np.array([lp.simulate_fbm(1 - TAU * D / 2, distribution_plan.limit_mt,
                                             ex.replication_seed(MASTER, ex.STREAM_LIMIT, r)).Y[-1]
                             for r in range(distribution_plan.replications)])
        sign_ok = np.sign(np.median(xs)) == np.sign(lead * np.median(limit_y1 ** 3))
        ok = okv is True and okq is True and bool(sign_ok)
        acceptance("8", ok, f"KS V_n {kv:.3f}, KS Q_n {kq:.3f} (<= 0.2), median sign match "
                            f"{bool(sign_ok)}")
        derived = ex.run_distribution(distribution_plan, q_convention="derived")
        acceptance("8", "info", f"Q_n against the re-derived constant: KS "
                                f"{derived.dist_row('thm32_dist')[1]:.3f}")
        assert ok


class TestLimitSimulators:
    def test_criterion_9(self, acceptance):
        reps = 500
        a = [lp.simulate_hermite_sum(1, D, 2 ** 14, 16, ex.replication_seed(MASTER, 3, r)).Y[-1]
             for r in range(reps)]
        b = [lp.simulate_fbm(1 - D / 2, 16, ex.replication_seed(MASTER, 4, r)).Y[-1]
             for r in range(reps)]
        ks = float(stats.ks_2samp(a, b).statistic)
        crit = 1.628 * math.sqrt(2 / reps)

        m, D2 = 2 ** 14, 0.25
        spec = lg.CovarianceSpec(D2)
        oracle = lg.hermite_sum_variance(spec, m, 2, lg.realized_autocovariance(spec, m))
        oracle /= m ** (2 - 2 * D2) * lp.scale_constant(2, D2) ** 2
        y2 = np.array([lp.simulate_hermite_sum(2, D2, m, 16, ex.replication_seed(MASTER, 5, r)).Y[-1]
                       for r in range(2000)])
        mc = float(y2.var(ddof=1))
        ok = ks <= crit and abs(mc - 0.5) <= 0.075 and abs(oracle - 0.5) <= 0.075
        acceptance("9", ok, f"KS {ks:.3f} (<= {crit:.3f}), Var Y2(1): MC {mc:.3f}, "
                            f"double-sum oracle {oracle:.3f} (0.5 +- 15%)")
        assert ok


class TestIIDBaseline:
    def test_criterion_10(self, acceptance):
        plan = ex.ExperimentPlan(n_grid=tuple(2 ** j for j in range(8, 15)), replications=2000,
                                 master_seed=MASTER, workers=WORKERS)
        rep = ex.iid_baseline(plan)
        _, mean, sem, near = rep.dist[0]
        decreasing = rep.slopes[0][4]
        ok = near and decreasing
        acceptance("10", ok, f"mean V_n(0.5,1) {mean:.4f} +- {sem:.4f} vs 0.25, "
                             f"median sup decreasing {decreasing}")
        assert ok


class TestDeterminism:
    ARGS = ["--set", "n_grid=64,128,256", "--set", "replications=50", "--set", "limit_mt=16",
            "--set", "metrics=cor21,prop22,thm22,prop42,gc_rate,thm23_dist,thm31_dist,thm32_dist"]

    def test_criterion_11(self, tmp_path, capsys, acceptance):
        runs = [("a", "1"), ("b", "1"), ("c", "2"), ("d", "3")]
        for name, w in runs:
            assert cli.main(["experiment", *self.ARGS, "--workers", w,
                             "--out", str(tmp_path / name)]) == 0
        for name in ("s1", "s2"):
            assert cli.main(["simulate", "--set", "n=64", "--out", str(tmp_path / name)]) == 0
        capsys.readouterr()
        same = all((tmp_path / r / f).read_bytes() == (tmp_path / "a" / f).read_bytes()
                   for r, _ in runs[1:] for f in ("rates.csv", "slopes.csv", "dist.csv"))
        same_sim = ((tmp_path / "s1/simulate.csv").read_bytes()
                    == (tmp_path / "s2/simulate.csv").read_bytes())
        ok = same and same_sim
        acceptance("11", ok, f"experiment CSVs identical over repeats and workers 1/2/3 {same}, "
                             f"simulate CSV identical {same_sim}")
        assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
