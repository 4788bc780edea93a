"""Monte Carlo harness for coupling rates, limit laws and the i.i.d. baseline."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
import math
import multiprocessing
import platform
import warnings

import numpy as np
from scipy import stats

from . import __version__
from . import distributions as dist
from . import hermite
from . import lrd_gauss
from . import limit_processes as lp
from ._kernels import METRICS, coupling_sweep
from .bk_vervaat import Model, delta_n, reduction_field, r_star, vervaat, vervaat_error
from .errors import EmptyInterval, InvalidSpec, NonPositiveValue
from .seq_processes import SampleBatch, sup_norm

__all__ = [
    "ExperimentPlan",
    "RateSpec",
    "ExperimentReport",
    "choose_p",
    "rate_spec",
    "regress_rate",
    "run_coupling",
    "run_distribution",
    "iid_baseline",
    "replication_seed",
]

COUPLING_METRICS = METRICS
DIST_METRICS = ("thm23_dist", "thm31_dist", "thm32_dist")
ALL_METRICS = COUPLING_METRICS + DIST_METRICS + ("iid_baseline",)

STREAM_DRIVER = 0
STREAM_LIMIT = 1
STREAM_IID = 2


def replication_seed(master, stream, rep):
    """64-bit seed for replication ``rep`` of a stream; streams never collide."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(stream), int(rep)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one experiment.

    ``G`` is a :class:`SubordinationSpec`; ``F`` defaults to its marginal.
    """

    tau: int = 1
    D: float = 0.4
    L: object = field(default_factory=lrd_gauss.ConstantL)
    family: str = "pure-power"
    G: object = None
    F: object = None
    n_grid: tuple = (2 ** 8, 2 ** 10, 2 ** 12, 2 ** 14)
    replications: int = 100
    master_seed: int = 20240601
    metrics: tuple = ("cor21", "prop22", "thm22", "prop42", "gc_rate")
    trimming: bool = True
    p_override: int = None
    limit_m: int = 2 ** 14
    limit_mt: int = 256
    limit_replications: int = None
    probe: tuple = (0.8, 1.0)
    ks_threshold: float = 0.15
    ks_threshold_q: float = 0.2
    workers: int = 1

    def __post_init__(self):
        if self.G is None:
            object.__setattr__(self, "G", hermite.SubordinationSpec(
                "quantile-compose", target=dist.normal()))
        if self.F is None:
            object.__setattr__(self, "F", self.G.marginal())
        ng = tuple(int(v) for v in self.n_grid)
        object.__setattr__(self, "n_grid", ng)
        if len(ng) < 1 or any(b <= a for a, b in zip(ng, ng[1:])) or ng[0] < 1:
            raise InvalidSpec("n_grid must be a strictly increasing list of positive integers")
        if self.replications < 1:
            raise InvalidSpec("replications must be >= 1")
        unknown = set(self.metrics) - set(ALL_METRICS)
        if unknown:
            raise InvalidSpec(f"unknown metrics {sorted(unknown)}")
        if any(m in DIST_METRICS for m in self.metrics) and self.replications < 50:
            raise InvalidSpec("distribution metrics need at least 50 replications")
        if not (0 < self.D < 1.0 / self.tau):
            raise InvalidSpec(f"need 0 < D < 1/tau, got tau={self.tau}, D={self.D}")

    @property
    def cov(self):
        return lrd_gauss.CovarianceSpec(self.D, self.L, self.family)

    @property
    def L_eff(self):
        return self.cov.slowly_varying

    def model(self, n):
        return Model(int(n), self.tau, self.D, self.L_eff)

    def describe(self):
        return {
            "tau": self.tau, "D": self.D, "L": self.L.describe(), "family": self.family,
            "G": self.G.describe(), "F": self.F.describe(), "n_grid": list(self.n_grid),
            "replications": self.replications, "master_seed": self.master_seed,
            "metrics": list(self.metrics), "trimming": self.trimming,
            "p_override": self.p_override, "limit_m": self.limit_m,
            "limit_mt": self.limit_mt, "probe": list(self.probe),
        }


def choose_p(tau, D, which):
    """Smallest integer p in the admissible interval of the proposition.

    prop21: max(2, tau, tau D/(1 - tau D)) < p <= max((4 - tau D)/D, (4 - tau D)/(1 - tau D))
    prop22: max(3 tau, 3 tau D/(1 - tau D)) < p <= same upper bound
    """
    if not (0 < D < 1.0 / tau):
        raise InvalidSpec(f"need 0 < D < 1/tau, got tau={tau}, D={D}")
    td = tau * D
    if which == "prop21":
        lower = max(2.0, float(tau), td / (1.0 - td))
    elif which == "prop22":
        lower = max(3.0 * tau, 3.0 * td / (1.0 - td))
    else:
        raise InvalidSpec(f"unknown proposition {which!r}")
    upper = max((4.0 - td) / D, (4.0 - td) / (1.0 - td))
    p = math.floor(lower) + 1
    if p > upper:
        raise EmptyInterval(f"no integer p with {lower:g} < p <= {upper:g}")
    return p


@dataclass(frozen=True)
class RateSpec:
    tau: int
    D: float
    nu: float
    p21: object
    p22: object
    expected: dict


def rate_spec(tau, D, p_override=None):
    """nu, the chosen p's and the expected log-log slopes per metric."""
    nu = min(D, 1.0 - tau * D) / 2.0
    ps = {}
    for which in ("prop21", "prop22"):
        try:
            ps[which] = p_override or choose_p(tau, D, which)
        except EmptyInterval:
            ps[which] = None
    p21 = ps["prop21"]
    expected = {
        # the epsilon slack makes this a report-only value
        "cor21": (-nu * p21 / 2.0 + tau * D / 4.0) if p21 else math.nan,
        "prop22": -tau * D / 2.0,
        "gc_rate": -tau * D / 2.0,
        "thm22": math.nan,
        "prop42": math.nan,
    }
    return RateSpec(tau, D, nu, p21, ps["prop22"], expected)


def regress_rate(points):
    """OLS slope (and its standard error) of log value on log n."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    n = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    if np.any(v <= 0) or np.any(n <= 0):
        raise NonPositiveValue("log-log regression needs positive n and values")
    res = stats.linregress(np.log(n), np.log(v))
    return float(res.slope), float(res.stderr)


@dataclass
class ExperimentReport:
    """Summaries, regressions, distribution comparisons and provenance."""

    rates: list = field(default_factory=list)      # (metric, n, median, q1, q3)
    slopes: list = field(default_factory=list)     # (metric, slope, stderr, expected, pass)
    dist: list = field(default_factory=list)       # (metric, ks, threshold, pass)
    samples: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def slope(self, metric):
        for row in self.slopes:
            if row[0] == metric:
                return row
        raise KeyError(metric)

    def medians(self, metric):
        return [row[2] for row in self.rates if row[0] == metric]

    def dist_row(self, metric):
        for row in self.dist:
            if row[0] == metric:
                return row
        raise KeyError(metric)

    def merge(self, other):
        self.rates += other.rates
        self.slopes += other.slopes
        self.dist += other.dist
        self.samples.update(other.samples)
        for k, v in other.manifest.items():
            self.manifest.setdefault(k, v)
        return self


_TASK = None


def _run_index(i):
    fn, args = _TASK
    return fn(args[i])


def _map(fn, args, workers):
    """Map over replications; results are returned in argument order.

    Workers are forked so that the plan (which holds closures) is inherited
    rather than pickled; only indices and numeric results cross processes.
    """
    global _TASK
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    _TASK = (fn, args)
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            return list(pool.map(_run_index, range(len(args)),
                                 chunksize=max(1, len(args) // (4 * workers))))
    finally:
        _TASK = None


def _path(plan, n, rep):
    seed = replication_seed(plan.master_seed, STREAM_DRIVER, rep)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return lrd_gauss.generate_path(plan.cov, n, seed)


def _coupling_rep(args):
    plan, rep, analysis = args
    n_max = plan.n_grid[-1]
    path = _path(plan, n_max, rep)
    batch = SampleBatch.from_path(path.values, plan.G)
    S = reduction_field(path, analysis).S
    dn = [plan.model(n).d for n in plan.n_grid]
    if plan.trimming:
        dl = [delta_n(n, plan.tau, plan.D, plan.L_eff) for n in plan.n_grid]
    else:
        dl = [0.0] * len(plan.n_grid)
    wanted = tuple(m for m in plan.metrics if m in COUPLING_METRICS)
    return coupling_sweep(batch.U, batch.X, S, plan.n_grid, dn, dl, analysis, plan.F,
                          metrics=wanted)


def _manifest(plan, analysis, extra=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        emb = lrd_gauss._embedding(plan.cov, plan.n_grid[-1], True, 1e-10)
    out = {
        "package": "lrdvervaat", "version": __version__,
        "python": platform.python_version(), "numpy": np.__version__,
        "plan": plan.describe(),
        "tau_detected": analysis.tau,
        "kappas": list(analysis.kappas),
        "driver_method": emb.method, "driver_clipped_mass": emb.clipped_mass,
        "seed_rule": "SeedSequence(entropy=master_seed, spawn_key=(stream, rep))",
        "streams": {"driver": STREAM_DRIVER, "limit": STREAM_LIMIT, "iid": STREAM_IID},
    }
    if extra:
        out.update(extra)
    return out


def _analysis(plan):
    an = hermite.analyze(plan.G, plan.F)
    if an.tau != plan.tau:
        raise InvalidSpec(f"G has Hermite rank {an.tau}, plan says tau={plan.tau}")
    return an


def run_coupling(plan, analysis=None):
    """Prefix-coupled sup-metrics across ``n_grid`` and their log-log slopes."""
    analysis = analysis or _analysis(plan)
    rs = rate_spec(plan.tau, plan.D, plan.p_override)
    reps = list(range(plan.replications))
    results = _map(_coupling_rep, [(plan, r, analysis) for r in reps], plan.workers)
    arr = np.stack(results)            # (reps, rows, len(n_grid))
    report = ExperimentReport()
    rows = {m: i for i, m in enumerate(METRICS)}
    for metric in (m for m in COUPLING_METRICS if m in plan.metrics):
        vals = arr[:, rows[metric], :]
        report.samples[metric] = vals
        med = np.median(vals, axis=0)
        q1, q3 = np.quantile(vals, [0.25, 0.75], axis=0)
        for j, n in enumerate(plan.n_grid):
            report.rates.append((metric, n, float(med[j]), float(q1[j]), float(q3[j])))
        exp = rs.expected[metric]
        if len(plan.n_grid) >= 3 and np.all(med > 0):
            slope, se = regress_rate(zip(plan.n_grid, med))
        else:
            slope, se = math.nan, math.nan
        report.slopes.append((metric, slope, se, exp, _slope_pass(metric, slope, med, exp)))
    report.manifest = _manifest(plan, analysis, {
        "nu": rs.nu, "p_prop21": rs.p21, "p_prop22": rs.p22,
    })
    return report


def _slope_pass(metric, slope, med, expected):
    if metric == "thm22":
        return bool(np.all(np.diff(med) < 0))
    if metric in ("prop22", "gc_rate"):
        return bool(expected - 0.15 <= slope <= min(expected + 0.15, -0.05))
    if metric in ("cor21", "prop42"):
        return bool(slope < -0.05)
    return bool(np.isfinite(slope))


def _probe_stats(plan, batch, model, y0, t0):
    n = model.n
    k = int(math.floor(n * t0 + 1e-9))
    d = model.d
    out = {}
    if "thm23_dist" in plan.metrics:
        out["thm23_dist"] = k * float(r_star(batch, model)(y0, t0)) / d ** 2
    if "thm31_dist" in plan.metrics:
        out["thm31_dist"] = float(vervaat(batch, model)(y0, t0))
    if "thm32_dist" in plan.metrics:
        out["thm32_dist"] = k * float(vervaat_error(batch, model)(y0, t0)) / d
    return out


def _dist_rep(args):
    plan, rep = args
    n = plan.n_grid[-1]
    path = _path(plan, n, rep)
    batch = SampleBatch.from_path(path.values, plan.G)
    return _probe_stats(plan, batch, plan.model(n), *plan.probe)


def _limit_rep(args):
    plan, rep = args
    seed = replication_seed(plan.master_seed, STREAM_LIMIT, rep)
    if plan.tau == 1:
        return lp.simulate_fbm(1.0 - plan.D / 2.0, plan.limit_mt, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return lp.simulate_hermite_sum(plan.tau, plan.D, plan.limit_m, plan.limit_mt, seed,
                                       cov=plan.cov)


_SURFACE = {"thm23_dist": "bk", "thm31_dist": "vervaat", "thm32_dist": "q"}


def run_distribution(plan, analysis=None, *, q_convention="stated"):
    """Two-sample KS between normalised probe statistics and limit samples.

    The probe is ``plan.probe``; a probe where the limit surface vanishes
    identically (for instance J'(y) = 0 for the Bahadur-Kiefer limit) is
    flagged degenerate and no KS test is run.
    """
    analysis = analysis or _analysis(plan)
    y0, t0 = plan.probe
    wanted = [m for m in DIST_METRICS if m in plan.metrics]
    report = ExperimentReport()
    if not wanted:
        return report
    pre = _map(_dist_rep, [(plan, r) for r in range(plan.replications)], plan.workers)
    lreps = plan.limit_replications or plan.replications
    paths = _map(_limit_rep, [(plan, r) for r in range(lreps)], plan.workers)
    for metric in wanted:
        xs = np.array([p[metric] for p in pre])
        ys = np.array([
            float(lp.limit_surface(_SURFACE[metric], analysis, plan.tau, plan.D, p,
                                   q_convention=q_convention)(y0, t0)) for p in paths])
        report.samples[metric] = (xs, ys)
        degenerate = _degenerate(metric, analysis, y0)
        thr = plan.ks_threshold_q if metric != "thm23_dist" else plan.ks_threshold
        if degenerate:
            report.dist.append((metric, math.nan, thr, "degenerate"))
            continue
        ks = float(stats.ks_2samp(xs, ys).statistic)
        report.dist.append((metric, ks, thr, bool(ks <= thr)))
    report.manifest = _manifest(plan, analysis, {
        "limit_method": paths[0].method, "limit_m": plan.limit_m if plan.tau > 1 else None,
        "limit_replications": lreps, "q_convention": q_convention,
    })
    return report


def _degenerate(metric, analysis, y0, tol=1e-12):
    J = abs(float(analysis.J(y0)))
    if metric == "thm31_dist":
        return J < tol
    Jp = abs(float(analysis.Jprime(y0)))
    return J < tol or Jp < tol


def _iid_rep(args):
    plan, rep = args
    seed = replication_seed(plan.master_seed, STREAM_IID, rep)
    U = np.random.default_rng(seed).uniform(size=plan.n_grid[-1])
    out = []
    for n in plan.n_grid:
        batch = SampleBatch(U[:n])
        d = math.sqrt(n)
        q = sup_norm(vervaat_error(batch, d), t_subset=[1.0])
        out.append(q)
    batch = SampleBatch(U)
    v = float(vervaat(batch, math.sqrt(batch.n))(0.5, 1.0))
    return np.array(out), v


def iid_baseline(plan):
    """i.i.d. uniform samples with d_n = sqrt(n): Vervaat's theorem in miniature.

    Reports the median of sup_s |Q_n(s, 1)| along ``n_grid`` and the MC
    mean of V_n(0.5, 1) at the largest n, whose limit is E B^2(0.5) = 1/4.
    """
    res = _map(_iid_rep, [(plan, r) for r in range(plan.replications)], plan.workers)
    sups = np.stack([r[0] for r in res])
    vs = np.array([r[1] for r in res])
    report = ExperimentReport()
    med = np.median(sups, axis=0)
    q1, q3 = np.quantile(sups, [0.25, 0.75], axis=0)
    for j, n in enumerate(plan.n_grid):
        report.rates.append(("iid_qsup", n, float(med[j]), float(q1[j]), float(q3[j])))
    decreasing = bool(np.all(np.diff(med) < 0))
    if len(plan.n_grid) >= 3:
        slope, se = regress_rate(zip(plan.n_grid, med))
    else:
        slope, se = math.nan, math.nan
    report.slopes.append(("iid_qsup", slope, se, math.nan, decreasing))
    mean, sem = float(vs.mean()), float(vs.std(ddof=1) / math.sqrt(vs.size))
    report.dist.append(("iid_v05_mean", mean, sem, bool(abs(mean - 0.25) <= 3 * sem)))
    report.samples["iid_qsup"] = sups
    report.samples["iid_v05"] = vs
    report.manifest = {
        "package": "lrdvervaat", "version": __version__,
        "plan": {"n_grid": list(plan.n_grid), "replications": plan.replications,
                 "master_seed": plan.master_seed},
        "seed_rule": "SeedSequence(entropy=master_seed, spawn_key=(2, rep))",
    }
    return report
